// SPDX-License-Identifier: Apache-2.0
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <medloop/errors.hpp>
#include <medloop/text_util.hpp>
#include <medloop/tools.hpp>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <set>
#include <sstream>
#include <thread>

namespace medloop
{

namespace
{
    auto base64(std::string_view data) -> std::string
    {
        std::string out(4 * ((data.size() + 2) / 3) + 1, '\0');
        auto n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                 reinterpret_cast<const unsigned char*>(data.data()),
                                 static_cast<int>(data.size()));
        out.resize(static_cast<std::size_t>(n));
        return out;
    }

    auto mime_for(const std::filesystem::path& p) -> std::string
    {
        auto ext = text::to_lower(p.extension().string());
        if (ext == ".jpg" || ext == ".jpeg")
            return "image/jpeg";
        if (ext == ".gif")
            return "image/gif";
        if (ext == ".webp")
            return "image/webp";
        return "image/png";
    }

    auto words_of(std::string_view s) -> std::set<std::string>
    {
        std::set<std::string> out;
        std::string cur;
        for (char c: s)
        {
            if (std::isalnum(static_cast<unsigned char>(c)))
                cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            else
            {
                if (cur.size() >= 3)
                    out.insert(cur);
                cur.clear();
            }
        }
        if (cur.size() >= 3)
            out.insert(cur);
        return out;
    }
} // namespace

VisionEndpointAnalyzer::VisionEndpointAnalyzer(std::string base_url,
                                               std::string api_key,
                                               std::string model,
                                               double timeout_seconds):
    base_url_(std::move(base_url)), api_key_(std::move(api_key)), model_(std::move(model)),
    timeout_seconds_(timeout_seconds)
{
}

auto VisionEndpointAnalyzer::analyze(const std::filesystem::path& image, const std::string& question) -> std::string
{
    auto bytes = text::read_file(image);
    nlohmann::json body;
    body["model"] = model_;
    body["messages"] = nlohmann::json::array(
        { { { "role", "user" },
            { "content",
              nlohmann::json::array(
                  { { { "type", "text" }, { "text", question } },
                    { { "type", "image_url" },
                      { "image_url", { { "url", "data:" + mime_for(image) + ";base64," + base64(bytes) } } } } }) } } });

    auto scheme_end = base_url_.find("://");
    auto path_start = base_url_.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    auto origin = base_url_.substr(0, path_start);
    auto prefix = path_start == std::string::npos ? std::string() : base_url_.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/')
        prefix.pop_back();

    httplib::Client client(origin);
    auto secs = static_cast<time_t>(timeout_seconds_);
    client.set_read_timeout(secs, 0);
    client.set_bearer_token_auth(api_key_);
    auto res = client.Post(prefix + "/chat/completions", body.dump(), "application/json");
    if (!res)
        throw TransportError("vision request failed: " + httplib::to_string(res.error()));
    if (res->status == 401 || res->status == 403)
        throw AuthError(fmt::format("vision endpoint rejected credentials (HTTP {})", res->status));
    if (res->status != 200)
        throw TransportError(fmt::format("vision endpoint returned HTTP {}", res->status));
    try
    {
        auto reply = nlohmann::json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    }
    catch (const nlohmann::json::exception& e)
    {
        throw TransportError(std::string("malformed vision reply: ") + e.what());
    }
}

auto StubCompiler::compile(const std::filesystem::path& dir, const std::string& source_name) -> CompileResult
{
    auto stem = std::filesystem::path(source_name).stem().string();
    CompileResult r;
    r.success = true;
    r.output = dir / (stem + ".stub.txt");
    r.log = "stub compiler: accepted " + source_name + "\n";
    text::write_file(r.output, r.log);
    return r;
}

auto find_on_path(const std::string& program) -> std::filesystem::path
{
    if (program.empty())
        return {};
    if (program.find('/') != std::string::npos)
        return ::access(program.c_str(), X_OK) == 0 ? std::filesystem::path(program) : std::filesystem::path();
    const char* path = std::getenv("PATH");
    if (!path)
        return {};
    std::istringstream in(path);
    for (std::string dir; std::getline(in, dir, ':');)
    {
        if (dir.empty())
            continue;
        auto candidate = std::filesystem::path(dir) / program;
        if (::access(candidate.c_str(), X_OK) == 0)
            return candidate;
    }
    return {};
}

auto run_command(const std::string& command, const std::filesystem::path& working_dir, double timeout_seconds)
    -> CommandOutput
{
    ::signal(SIGPIPE, SIG_IGN);
    int out_pipe[2];
    if (::pipe(out_pipe) != 0)
        throw FilesystemError(std::string("pipe failed: ") + std::strerror(errno));
    auto wd = working_dir.string();
    pid_t pid = ::fork();
    if (pid < 0)
        throw FilesystemError(std::string("fork failed: ") + std::strerror(errno));
    if (pid == 0)
    {
        ::setpgid(0, 0);
        int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0)
            ::dup2(devnull, 0);
        ::dup2(out_pipe[1], 1);
        ::dup2(out_pipe[1], 2);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        if (!wd.empty() && ::chdir(wd.c_str()) != 0)
            ::_exit(126);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    ::close(out_pipe[1]);

    CommandOutput result;
    auto deadline = std::chrono::steady_clock::now() + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                          std::chrono::duration<double>(timeout_seconds));
    char buf[8192];
    while (true)
    {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
        if (left <= 0)
        {
            result.timed_out = true;
            ::kill(-pid, SIGKILL);
            break;
        }
        pollfd p { out_pipe[0], POLLIN, 0 };
        auto pr = ::poll(&p, 1, static_cast<int>(std::min<long long>(left, 1000)));
        if (pr < 0 && errno == EINTR)
            continue;
        if (pr <= 0)
            continue;
        auto n = ::read(out_pipe[0], buf, sizeof buf);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            break;
        result.output.append(buf, static_cast<std::size_t>(n));
    }
    ::close(out_pipe[0]);
    int status = 0;
    ::waitpid(pid, &status, 0);
    if (!result.timed_out && WIFEXITED(status))
        result.exit_code = WEXITSTATUS(status);
    return result;
}

CommandCompiler::CommandCompiler(std::string command, double timeout_seconds):
    command_(std::move(command)), timeout_seconds_(timeout_seconds)
{
}

auto CommandCompiler::available() const -> bool
{
    std::istringstream in(command_);
    std::string program;
    in >> program;
    return !find_on_path(program).empty();
}

auto CommandCompiler::compile(const std::filesystem::path& dir, const std::string& source_name) -> CompileResult
{
    auto stem = std::filesystem::path(source_name).stem().string();
    auto cmd = text::render(command_, { { "source", source_name }, { "stem", stem } });
    auto out = run_command(cmd, dir, timeout_seconds_);
    CompileResult r;
    r.log = out.output;
    if (out.timed_out)
        r.log += "\n[compiler timed out]\n";
    auto pdf = dir / (stem + ".pdf");
    r.success = !out.timed_out && out.exit_code == 0;
    if (r.success)
        r.output = std::filesystem::exists(pdf) ? pdf : dir / source_name;
    auto log_file = dir / (stem + ".log");
    if (!r.success && std::filesystem::exists(log_file))
        r.log = text::read_file(log_file);
    return r;
}

LocalCorpusRetrieval::LocalCorpusRetrieval(std::filesystem::path dir, std::size_t max_items, std::size_t excerpt_chars):
    dir_(std::move(dir)), max_items_(max_items), excerpt_chars_(excerpt_chars)
{
}

auto LocalCorpusRetrieval::retrieve(const std::string& query) -> RetrievalBundle
{
    RetrievalBundle bundle;
    if (dir_.empty() || !std::filesystem::is_directory(dir_))
        return bundle;
    auto q = words_of(query);
    struct Scored
    {
        std::size_t score;
        std::string name;
        std::string content;
    };
    std::vector<Scored> scored;
    for (const auto& entry: std::filesystem::recursive_directory_iterator(dir_))
    {
        if (!entry.is_regular_file())
            continue;
        auto ext = text::to_lower(entry.path().extension().string());
        if (ext != ".md" && ext != ".txt")
            continue;
        auto content = text::read_file(entry.path());
        auto w = words_of(content);
        std::size_t s = 0;
        for (const auto& word: q)
            s += w.count(word);
        if (s > 0)
            scored.push_back({ s, std::filesystem::relative(entry.path(), dir_).string(), std::move(content) });
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        return a.score != b.score ? a.score > b.score : a.name < b.name;
    });
    for (std::size_t i = 0; i < scored.size() && i < max_items_; ++i)
        bundle.items.push_back({ RetrievalSource::Case, scored[i].name, text::truncate_head(scored[i].content, excerpt_chars_) });
    return bundle;
}

auto render_bundle(const RetrievalBundle& bundle, std::size_t max_chars) -> std::string
{
    if (bundle.items.empty())
        return no_retrieval_marker;
    std::string out;
    for (const auto& item: bundle.items)
    {
        const char* kind = item.source == RetrievalSource::Case  ? "case"
                           : item.source == RetrievalSource::Web ? "web"
                                                                 : "archive";
        out += fmt::format("### [{}] {}\n{}\n\n", kind, item.title, item.excerpt);
    }
    return text::truncate_head(out, max_chars);
}

auto probe_device_info() -> std::string
{
    auto cpus = std::thread::hardware_concurrency();
    std::string accel = "none detected";
    if (std::filesystem::exists("/dev/nvidia0") || !find_on_path("nvidia-smi").empty())
        accel = "NVIDIA GPU present";
    return fmt::format("CPU cores: {}\nAccelerator: {}", cpus == 0 ? std::string("unknown") : std::to_string(cpus), accel);
}

} // namespace medloop
