// SPDX-License-Identifier: Apache-2.0
#include <medloop/errors.hpp>
#include <medloop/exec_session.hpp>
#include <medloop/text_util.hpp>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <random>
#include <sstream>

extern char** environ;

namespace medloop
{

namespace
{
    constexpr const char* driver_source = R"PY(import builtins
import io
import json
import os
import sys
import traceback

_real_in = sys.stdin
_real_out = sys.stdout
_real_err = sys.stderr
_tool_token = os.environ.get("MEDLOOP_TOOL_TOKEN", "")


def _tool_call(name, args):
    _real_out.write("\n" + _tool_token + " " + json.dumps({"tool": name, "args": args}) + "\n")
    _real_out.flush()
    line = _real_in.readline()
    if not line:
        raise RuntimeError("tool channel closed")
    reply = json.loads(line)
    if reply.get("error"):
        raise RuntimeError(reply["error"])
    return reply.get("result", "")


def analyze_image(path, question="Describe this figure."):
    return _tool_call("analyze_image", {"path": str(path), "question": str(question)})


def safe_json_serialize(obj):
    def conv(o):
        if isinstance(o, dict):
            return {str(k): conv(v) for k, v in o.items()}
        if isinstance(o, (list, tuple, set)):
            return [conv(v) for v in o]
        if hasattr(o, "tolist"):
            return conv(o.tolist())
        if hasattr(o, "item"):
            try:
                return o.item()
            except Exception:
                pass
        if isinstance(o, float) and o != o:
            return None
        if isinstance(o, (str, int, float, bool)) or o is None:
            return o
        return str(o)
    return json.dumps(conv(obj), indent=2)


_ns = {"__name__": "__main__", "__builtins__": builtins}
_ns["analyze_image"] = analyze_image
_ns["safe_json_serialize"] = safe_json_serialize
try:
    _ns["DATA_PATHS"] = json.loads(os.environ.get("MEDLOOP_DATA_PATHS", "{}"))
except ValueError:
    _ns["DATA_PATHS"] = {}
_ns["OUTPUT_DIR"] = os.environ.get("MEDLOOP_OUTPUT_DIR", os.getcwd())

while True:
    line = _real_in.readline()
    if not line:
        break
    line = line.rstrip("\n")
    if not line.startswith("BEGIN "):
        continue
    sentinel = line[6:]
    end = "END " + sentinel
    chunks = []
    while True:
        part = _real_in.readline()
        if not part:
            sys.exit(0)
        if part.rstrip("\n") == end:
            break
        chunks.append(part)
    code = "".join(chunks)
    before = dict(_ns)
    ok = True
    sys.stdin = io.StringIO("")
    try:
        exec(compile(code, "<fragment>", "exec"), _ns)
    except BaseException:
        ok = False
        traceback.print_exc()
        _ns.clear()
        _ns.update(before)
    finally:
        sys.stdin = _real_in
        if sys.stdout is not _real_out:
            try:
                sys.stdout.flush()
            except Exception:
                pass
            sys.stdout = _real_out
        if sys.stderr is not _real_err:
            sys.stderr = _real_err
    _real_err.flush()
    _real_err.write("\n" + sentinel + "\n")
    _real_err.flush()
    _real_out.flush()
    _real_out.write("\n" + sentinel + (" OK" if ok else " ERR") + "\n")
    _real_out.flush()
)PY";

    auto random_hex(std::size_t n) -> std::string
    {
        static thread_local std::mt19937_64 rng { std::random_device {}() };
        static constexpr char digits[] = "0123456789abcdef";
        std::string s;
        for (std::size_t i = 0; i < n; ++i)
            s += digits[rng() % 16];
        return s;
    }

    auto split_command(const std::string& cmd) -> std::vector<std::string>
    {
        std::istringstream in(cmd);
        std::vector<std::string> out;
        for (std::string t; in >> t;)
            out.push_back(t);
        return out;
    }

    void close_fd(int& fd)
    {
        if (fd >= 0)
            ::close(fd);
        fd = -1;
    }

    auto is_ident(char c) -> bool
    {
        return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
    }

    void write_all(int fd, std::string_view data)
    {
        while (!data.empty())
        {
            auto n = ::write(fd, data.data(), data.size());
            if (n < 0)
            {
                if (errno == EINTR)
                    continue;
                throw SessionDead(std::string("write to interpreter failed: ") + std::strerror(errno));
            }
            data.remove_prefix(static_cast<std::size_t>(n));
        }
    }

    // Strips the newline the driver emits ahead of a control line.
    void drop_one_newline(std::string& s)
    {
        if (!s.empty() && s.back() == '\n')
            s.pop_back();
    }
} // namespace

auto default_denylist() -> std::vector<std::string>
{
    return { "subprocess", "os.system", "os.popen", "os.remove", "os.unlink", "os.rmdir",
             "shutil.rmtree", "requests", "urllib", "http.client", "socket" };
}

auto screen_readonly(std::string_view code, const std::vector<std::string>& denylist) -> ScreenResult
{
    ScreenResult r;
    for (const auto& pattern: denylist)
    {
        if (pattern.empty())
            continue;
        std::size_t pos = 0;
        while ((pos = code.find(pattern, pos)) != std::string_view::npos)
        {
            auto end = pos + pattern.size();
            bool left = pos == 0 || !is_ident(code[pos - 1]);
            bool right = end >= code.size() || !is_ident(code[end]);
            if (left && right)
            {
                r.matched.push_back(pattern);
                break;
            }
            ++pos;
        }
    }
    return r;
}

Session::Session(SessionConfig cfg): cfg_(std::move(cfg)) {}

Session::~Session()
{
    kill_child();
    std::error_code ec;
    if (!temp_dir_.empty())
        std::filesystem::remove_all(temp_dir_, ec);
}

auto Session::start(SessionConfig cfg) -> std::unique_ptr<Session>
{
    ::signal(SIGPIPE, SIG_IGN);
    std::unique_ptr<Session> s(new Session(std::move(cfg)));
    s->temp_dir_ = std::filesystem::temp_directory_path() / ("medloop-" + random_hex(16));
    std::filesystem::create_directories(s->temp_dir_);
    s->driver_path_ = s->temp_dir_ / "driver.py";
    text::write_file(s->driver_path_, driver_source);
    s->tool_token_ = "__medloop_tool_" + random_hex(24);
    s->spawn();
    s->handshake();
    return s;
}

void Session::spawn()
{
    auto argv_s = split_command(cfg_.interpreter_command);
    if (argv_s.empty())
        throw SpawnError("empty interpreter command");
    for (auto& a: argv_s)
    {
        auto p = a.find("{driver}");
        if (p != std::string::npos)
            a.replace(p, 8, driver_path_.string());
    }

    std::map<std::string, std::string> env;
    for (char** e = environ; e && *e; ++e)
    {
        std::string kv(*e);
        auto eq = kv.find('=');
        if (eq != std::string::npos)
            env[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    for (const auto& [k, v]: cfg_.env_overrides)
        env[k] = v;
    env["MEDLOOP_TOOL_TOKEN"] = tool_token_;
    env["PYTHONUNBUFFERED"] = "1";
    std::vector<std::string> env_s;
    for (const auto& [k, v]: env)
        env_s.push_back(k + "=" + v);

    std::vector<char*> argv;
    for (auto& a: argv_s)
        argv.push_back(a.data());
    argv.push_back(nullptr);
    std::vector<char*> envp;
    for (auto& e: env_s)
        envp.push_back(e.data());
    envp.push_back(nullptr);

    int in_pipe[2], out_pipe[2], err_pipe[2], status_pipe[2];
    if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0
        || ::pipe2(status_pipe, O_CLOEXEC) != 0)
        throw SpawnError(std::string("pipe failed: ") + std::strerror(errno));

    auto wd = cfg_.working_dir.empty() ? std::string() : cfg_.working_dir.string();
    if (!wd.empty())
        std::filesystem::create_directories(cfg_.working_dir);

    pid_t pid = ::fork();
    if (pid < 0)
        throw SpawnError(std::string("fork failed: ") + std::strerror(errno));
    if (pid == 0)
    {
        ::setpgid(0, 0);
        ::dup2(in_pipe[0], 0);
        ::dup2(out_pipe[1], 1);
        ::dup2(err_pipe[1], 2);
        for (int fd: { in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1],
                       status_pipe[0] })
            ::close(fd);
        if (!wd.empty() && ::chdir(wd.c_str()) != 0)
        {
            int err = errno;
            [[maybe_unused]] auto n = ::write(status_pipe[1], &err, sizeof err);
            ::_exit(127);
        }
        ::execvpe(argv[0], argv.data(), envp.data());
        int err = errno;
        [[maybe_unused]] auto n = ::write(status_pipe[1], &err, sizeof err);
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    ::close(status_pipe[1]);
    int child_errno = 0;
    auto n = ::read(status_pipe[0], &child_errno, sizeof child_errno);
    ::close(status_pipe[0]);
    if (n == static_cast<ssize_t>(sizeof child_errno))
    {
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(err_pipe[0]);
        ::waitpid(pid, nullptr, 0);
        throw SpawnError(fmt::format("cannot start '{}': {}", argv_s[0], std::strerror(child_errno)));
    }
    pid_ = pid;
    stdin_fd_ = in_pipe[1];
    stdout_fd_ = out_pipe[0];
    stderr_fd_ = err_pipe[0];
    state_ = SessionState::Idle;
}

void Session::handshake()
{
    auto raw = run_frame("print(\"ok\")", cfg_.handshake_timeout_seconds);
    if (raw.timed_out)
    {
        kill_child();
        throw HandshakeTimeout("interpreter did not answer the handshake");
    }
    if (raw.died || !raw.ok || text::trim(raw.out) != "ok")
    {
        kill_child();
        throw SpawnError("interpreter failed the handshake: " + text::truncate_tail(raw.err, 2000));
    }
    state_ = SessionState::Idle;
}

void Session::kill_child()
{
    if (pid_ > 0)
    {
        ::kill(-pid_, SIGKILL);
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, nullptr, 0);
    }
    pid_ = -1;
    close_fd(stdin_fd_);
    close_fd(stdout_fd_);
    close_fd(stderr_fd_);
    state_ = SessionState::Dead;
}

auto Session::run_frame(std::string_view code, double timeout_seconds) -> Raw
{
    using clock = std::chrono::steady_clock;
    auto sentinel = "__medloop_" + random_hex(32);
    std::string frame = "BEGIN " + sentinel + "\n";
    frame += code;
    frame += "\nEND " + sentinel + "\n";
    ++frames_sent_;
    state_ = SessionState::Busy;

    Raw raw;
    try
    {
        write_all(stdin_fd_, frame);
    }
    catch (const SessionDead&)
    {
        kill_child();
        raw.died = true;
        return raw;
    }

    auto deadline = clock::now() + std::chrono::duration_cast<clock::duration>(
                                       std::chrono::duration<double>(timeout_seconds));
    std::string out_pending;
    std::string err_pending;
    bool out_done = false;
    bool err_done = false;
    bool out_eof = false;
    bool err_eof = false;
    const auto ok_line = sentinel + " OK";
    const auto err_line = sentinel + " ERR";

    auto handle_out_line = [&](std::string line) {
        if (line == ok_line || line == err_line)
        {
            raw.ok = line == ok_line;
            drop_one_newline(raw.out);
            out_done = true;
            return;
        }
        if (line.rfind(sentinel, 0) == 0)
            throw FrameProtocolError("unknown frame status '" + line + "'");
        if (!tool_token_.empty() && line.rfind(tool_token_ + " ", 0) == 0)
        {
            drop_one_newline(raw.out);
            nlohmann::json reply;
            try
            {
                auto req = nlohmann::json::parse(line.substr(tool_token_.size() + 1));
                auto tool = req.value("tool", "");
                auto args = req.value("args", nlohmann::json::object());
                if (tool_handler_)
                    reply["result"] = tool_handler_(tool, args);
                else
                    reply["error"] = "tool '" + tool + "' is unavailable";
            }
            catch (const std::exception& e)
            {
                reply["error"] = std::string("tool failure: ") + e.what();
            }
            write_all(stdin_fd_, reply.dump() + "\n");
            return;
        }
        raw.out += line;
        raw.out += '\n';
    };
    auto handle_err_line = [&](std::string line) {
        if (line == sentinel)
        {
            drop_one_newline(raw.err);
            err_done = true;
            return;
        }
        raw.err += line;
        raw.err += '\n';
    };

    char buffer[65536];
    while (!(out_done && err_done))
    {
        if (out_eof && err_eof)
            break;
        auto now = clock::now();
        if (now >= deadline)
        {
            raw.timed_out = true;
            break;
        }
        auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
        pollfd fds[2];
        nfds_t nf = 0;
        int out_slot = -1, err_slot = -1;
        if (!out_done && !out_eof)
        {
            fds[nf] = { stdout_fd_, POLLIN, 0 };
            out_slot = static_cast<int>(nf++);
        }
        if (!err_done && !err_eof)
        {
            fds[nf] = { stderr_fd_, POLLIN, 0 };
            err_slot = static_cast<int>(nf++);
        }
        if (nf == 0)
            break;
        auto pr = ::poll(fds, nf, static_cast<int>(std::min<long long>(remaining + 1, 1000)));
        if (pr < 0)
        {
            if (errno == EINTR)
                continue;
            throw SessionDead(std::string("poll failed: ") + std::strerror(errno));
        }
        auto drain = [&](int slot, int fd, std::string& pending, bool& eof, auto&& on_line, bool& done) {
            if (slot < 0 || !(fds[slot].revents & (POLLIN | POLLHUP | POLLERR)))
                return;
            auto n = ::read(fd, buffer, sizeof buffer);
            if (n <= 0)
            {
                if (n < 0 && errno == EINTR)
                    return;
                eof = true;
                return;
            }
            pending.append(buffer, static_cast<std::size_t>(n));
            std::size_t nl;
            while (!done && (nl = pending.find('\n')) != std::string::npos)
            {
                auto line = pending.substr(0, nl);
                pending.erase(0, nl + 1);
                on_line(std::move(line));
            }
        };
        drain(out_slot, stdout_fd_, out_pending, out_eof, handle_out_line, out_done);
        drain(err_slot, stderr_fd_, err_pending, err_eof, handle_err_line, err_done);
    }

    if (raw.timed_out)
    {
        raw.out += out_pending;
        raw.err += err_pending;
        kill_child();
        return raw;
    }
    if (!out_done)
    {
        // child exited before finishing the frame
        raw.out += out_pending;
        raw.err += err_pending;
        raw.ok = false;
        raw.died = true;
        kill_child();
        return raw;
    }
    if (!err_done)
    {
        kill_child();
        throw FrameProtocolError("stderr end marker never observed");
    }
    state_ = SessionState::Idle;
    return raw;
}

auto Session::exec(std::string_view code, double timeout_seconds) -> ExecResult
{
    if (state_ == SessionState::Dead)
        throw SessionDead("session is dead");
    if (state_ == SessionState::Busy)
        throw SessionError("session is busy");
    if (cfg_.readonly)
    {
        auto screen = screen_readonly(code, cfg_.denylist);
        if (!screen.pass())
        {
            std::string joined;
            for (const auto& m: screen.matched)
                joined += (joined.empty() ? "" : ", ") + m;
            throw ScreenRejected("fragment uses denied patterns: " + joined);
        }
    }

    auto started = std::chrono::steady_clock::now();
    auto raw = run_frame(code, timeout_seconds);
    ExecResult r;
    r.fragment_index = static_cast<int>(log_.size());
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    r.timed_out = raw.timed_out;
    r.exit_ok = raw.ok && !raw.timed_out && !raw.died;
    if (raw.timed_out)
        raw.err += fmt::format("TimeoutError: fragment exceeded {:.0f} seconds; session terminated\n",
                               timeout_seconds);
    else if (raw.died)
        raw.err += "InterpreterExit: the interpreter process exited during the fragment\n";

    if (!cfg_.stdout_log.empty())
    {
        std::string entry = raw.out;
        if (!entry.empty() && entry.back() != '\n')
            entry += '\n';
        if (!r.exit_ok && !raw.err.empty())
        {
            entry += raw.err;
            if (entry.back() != '\n')
                entry += '\n';
        }
        text::append_file(cfg_.stdout_log, entry);
    }

    r.stdout_truncated = raw.out.size() > cfg_.max_output_chars;
    r.stdout_text = text::truncate_tail(raw.out, cfg_.max_output_chars);
    r.stderr_truncated = raw.err.size() > cfg_.max_output_chars;
    r.stderr_text = text::truncate_tail(raw.err, cfg_.max_output_chars);
    if (r.exit_ok)
        successes_.emplace_back(code);
    log_.push_back(r);
    return r;
}

void Session::revive(double timeout_seconds)
{
    if (state_ != SessionState::Dead)
        return;
    kill_child();
    spawn();
    handshake();
    for (const auto& code: successes_)
    {
        auto raw = run_frame(code, timeout_seconds);
        if (!raw.ok)
        {
            spdlog::warn("replayed fragment failed during revive");
            if (state_ == SessionState::Dead)
                throw SessionDead("session died while replaying fragments");
        }
    }
}

} // namespace medloop
