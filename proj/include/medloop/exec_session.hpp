// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <sys/types.h>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace medloop
{

struct SessionConfig
{
    /// `{driver}` expands to the generated driver script path. Split on whitespace.
    std::string interpreter_command = "python3 -u {driver}";
    std::filesystem::path working_dir;
    std::map<std::string, std::string> env_overrides;
    std::size_t max_output_chars = 10000;
    double handshake_timeout_seconds = 30;
    /// Screen every fragment against `denylist` and reject matches with ScreenRejected.
    bool readonly = false;
    std::vector<std::string> denylist;
    /// When set, full fragment output is appended to this file.
    std::filesystem::path stdout_log;
};

enum class SessionState
{
    Idle,
    Busy,
    Dead,
};

struct ExecResult
{
    int fragment_index = 0;
    std::string stdout_text;
    bool stdout_truncated = false;
    std::string stderr_text;
    bool stderr_truncated = false;
    bool exit_ok = false;
    double wall_time = 0.0;
    bool timed_out = false;
};

struct ScreenResult
{
    std::vector<std::string> matched;

    [[nodiscard]] auto pass() const -> bool { return matched.empty(); }
};

[[nodiscard]] auto default_denylist() -> std::vector<std::string>;

/// Best-effort static screen. A pattern matches when it occurs in `code` with no identifier
/// character directly before or after it.
[[nodiscard]] auto screen_readonly(std::string_view code, const std::vector<std::string>& denylist)
    -> ScreenResult;

/// Answers a tool request raised from inside a fragment. Returns the textual result.
using ToolHandler = std::function<std::string(const std::string& tool, const nlohmann::json& args)>;

/// A long-lived interpreter child evaluating fragments in one shared namespace.
class Session
{
  public:
    /// Spawns the interpreter and runs a handshake fragment. Throws SpawnError, HandshakeTimeout.
    [[nodiscard]] static auto start(SessionConfig cfg) -> std::unique_ptr<Session>;

    ~Session();
    Session(const Session&) = delete;
    auto operator=(const Session&) -> Session& = delete;

    /// Runs one fragment. A failing fragment leaves the namespace as it was before it ran.
    /// On timeout the child is killed and the session becomes Dead.
    /// Throws SessionDead, FrameProtocolError, ScreenRejected.
    auto exec(std::string_view code, double timeout_seconds) -> ExecResult;

    /// Restarts a dead session and re-runs every successful fragment in order.
    void revive(double timeout_seconds);

    void set_tool_handler(ToolHandler handler) { tool_handler_ = std::move(handler); }
    void set_stdout_log(std::filesystem::path path) { cfg_.stdout_log = std::move(path); }

    [[nodiscard]] auto state() const -> SessionState { return state_; }
    [[nodiscard]] auto fragment_log() const -> const std::vector<ExecResult>& { return log_; }
    [[nodiscard]] auto successful_fragments() const -> const std::vector<std::string>& { return successes_; }
    /// Number of frames written to the child, handshakes and replays included.
    [[nodiscard]] auto frames_sent() const -> std::size_t { return frames_sent_; }
    [[nodiscard]] auto config() const -> const SessionConfig& { return cfg_; }

  private:
    explicit Session(SessionConfig cfg);

    void spawn();
    void handshake();
    void kill_child();
    struct Raw
    {
        std::string out;
        std::string err;
        bool ok = false;
        bool timed_out = false;
        bool died = false;
    };
    auto run_frame(std::string_view code, double timeout_seconds) -> Raw;

    SessionConfig cfg_;
    std::filesystem::path temp_dir_;
    std::filesystem::path driver_path_;
    std::string tool_token_;
    pid_t pid_ = -1;
    int stdin_fd_ = -1;
    int stdout_fd_ = -1;
    int stderr_fd_ = -1;
    SessionState state_ = SessionState::Dead;
    std::vector<ExecResult> log_;
    std::vector<std::string> successes_;
    std::size_t frames_sent_ = 0;
    ToolHandler tool_handler_;
};

} // namespace medloop
