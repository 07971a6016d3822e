// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <medloop/config.hpp>
#include <medloop/llm_gateway.hpp>
#include <medloop/text_util.hpp>

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>
#include <unistd.h>

namespace testutil
{

namespace fs = std::filesystem;

/// Fresh directory removed on scope exit.
class TempDir
{
  public:
    explicit TempDir(const std::string& tag = "t")
    {
        static std::atomic<int> counter { 0 };
        path_ = fs::temp_directory_path() /
                ("medloop_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    auto operator=(const TempDir&) -> TempDir& = delete;

    [[nodiscard]] auto path() const -> const fs::path& { return path_; }
    auto operator/(const std::string& rel) const -> fs::path { return path_ / rel; }

  private:
    fs::path path_;
};

inline auto fixture_dir() -> fs::path
{
    return MEDLOOP_FIXTURE_DIR;
}

inline auto data_dir() -> fs::path
{
    return MEDLOOP_TEST_DATA_DIR;
}

/// Scripted provider over transcript text. The header line is added when missing.
inline auto scripted(const std::string& text) -> std::shared_ptr<medloop::ScriptedProvider>
{
    auto body = text.rfind("%transcript", 0) == 0 ? text : "%transcript v1\n" + text;
    return std::make_shared<medloop::ScriptedProvider>(medloop::parse_transcript(body));
}

/// One transcript entry with a fenced reply.
inline auto entry(const std::string& selector, const std::string& reply) -> std::string
{
    return "@@ " + selector + "\n~~~~\n" + reply + "\n~~~~\n";
}

/// Fenced block as it appears inside a reply.
inline auto block(const std::string& label, const std::string& body) -> std::string
{
    return "```" + label + "\n" + body + "\n```\n";
}

inline auto fast_gateway_config() -> medloop::GatewayConfig
{
    medloop::GatewayConfig g;
    g.backoff_seconds = 0.0;
    return g;
}

/// Validated defaults with short timeouts and the repository data directory.
inline auto test_config() -> medloop::PipelineConfig
{
    medloop::PipelineConfig cfg;
    cfg.gateway = fast_gateway_config();
    cfg.coding.fragment_timeout_seconds = 20;
    cfg.data.timeout_seconds = 20;
    cfg.design.uncertainty_methods_path = data_dir() / "uncertainty_methods.md";
    cfg.report.compiler_command = "";
    return medloop::validate_config(cfg);
}

} // namespace testutil
