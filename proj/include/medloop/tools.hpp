// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace medloop
{

/// Answers a question about an image file.
class ImageAnalyzer
{
  public:
    virtual ~ImageAnalyzer() = default;
    virtual auto analyze(const std::filesystem::path& image, const std::string& question) -> std::string = 0;
    [[nodiscard]] virtual auto available() const -> bool = 0;
};

class NullImageAnalyzer: public ImageAnalyzer
{
  public:
    static constexpr const char* unavailable_text = "Image analysis unavailable.";
    auto analyze(const std::filesystem::path&, const std::string&) -> std::string override
    {
        return unavailable_text;
    }
    [[nodiscard]] auto available() const -> bool override { return false; }
};

/// Routes answers through a callable; used by tests and embedding applications.
class FunctionImageAnalyzer: public ImageAnalyzer
{
  public:
    using Fn = std::function<std::string(const std::filesystem::path&, const std::string&)>;
    explicit FunctionImageAnalyzer(Fn fn): fn_(std::move(fn)) {}
    auto analyze(const std::filesystem::path& image, const std::string& question) -> std::string override
    {
        return fn_(image, question);
    }
    [[nodiscard]] auto available() const -> bool override { return true; }

  private:
    Fn fn_;
};

/// Sends the image as a base64 data URL to an OpenAI-compatible vision endpoint.
class VisionEndpointAnalyzer: public ImageAnalyzer
{
  public:
    VisionEndpointAnalyzer(std::string base_url, std::string api_key, std::string model, double timeout_seconds);
    auto analyze(const std::filesystem::path& image, const std::string& question) -> std::string override;
    [[nodiscard]] auto available() const -> bool override { return true; }

  private:
    std::string base_url_;
    std::string api_key_;
    std::string model_;
    double timeout_seconds_;
};

struct CompileResult
{
    bool success = false;
    std::string log;
    std::filesystem::path output; ///< Rendered document when success.
};

/// Renders a typeset source file that lives in `dir`.
class DocumentCompiler
{
  public:
    virtual ~DocumentCompiler() = default;
    virtual auto compile(const std::filesystem::path& dir, const std::string& source_name) -> CompileResult = 0;
    [[nodiscard]] virtual auto available() const -> bool = 0;
};

/// Accepts every document; writes a marker file in place of a rendered document.
class StubCompiler: public DocumentCompiler
{
  public:
    auto compile(const std::filesystem::path& dir, const std::string& source_name) -> CompileResult override;
    [[nodiscard]] auto available() const -> bool override { return true; }
};

/// Runs a shell command template in the source directory. `{source}` expands to the source
/// file name and `{stem}` to the name without extension.
class CommandCompiler: public DocumentCompiler
{
  public:
    CommandCompiler(std::string command, double timeout_seconds);
    auto compile(const std::filesystem::path& dir, const std::string& source_name) -> CompileResult override;
    /// True when the first word of the command resolves on PATH.
    [[nodiscard]] auto available() const -> bool override;

  private:
    std::string command_;
    double timeout_seconds_;
};

/// Result of running a shell command with a deadline.
struct CommandOutput
{
    int exit_code = -1;
    bool timed_out = false;
    std::string output; ///< stdout and stderr interleaved.
};

[[nodiscard]] auto run_command(const std::string& command,
                               const std::filesystem::path& working_dir,
                               double timeout_seconds) -> CommandOutput;

[[nodiscard]] auto find_on_path(const std::string& program) -> std::filesystem::path;

enum class RetrievalSource
{
    Case,
    Web,
    Archive,
};

struct RetrievalItem
{
    RetrievalSource source = RetrievalSource::Case;
    std::string title;
    std::string excerpt;
};

struct RetrievalBundle
{
    std::vector<RetrievalItem> items;
};

class RetrievalProvider
{
  public:
    virtual ~RetrievalProvider() = default;
    virtual auto retrieve(const std::string& query) -> RetrievalBundle = 0;
};

class NullRetrieval: public RetrievalProvider
{
  public:
    auto retrieve(const std::string&) -> RetrievalBundle override { return {}; }
};

/// Ranks the text files of a directory by the number of distinct query words they contain.
class LocalCorpusRetrieval: public RetrievalProvider
{
  public:
    explicit LocalCorpusRetrieval(std::filesystem::path dir, std::size_t max_items = 3,
                                  std::size_t excerpt_chars = 1500);
    auto retrieve(const std::string& query) -> RetrievalBundle override;

  private:
    std::filesystem::path dir_;
    std::size_t max_items_;
    std::size_t excerpt_chars_;
};

/// Marker rendered when a bundle is empty.
inline constexpr const char* no_retrieval_marker = "[No retrieved material available]";

/// Renders a bundle for a prompt slot, bounded by `max_chars`.
[[nodiscard]] auto render_bundle(const RetrievalBundle& bundle, std::size_t max_chars) -> std::string;

/// CPU count and accelerator presence; fields that cannot be probed read "unknown".
[[nodiscard]] auto probe_device_info() -> std::string;

} // namespace medloop
