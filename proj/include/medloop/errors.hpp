// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace medloop
{

/// Root of every error raised by the engine.
class Error: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// An error that names the offending input field.
class FieldError: public Error
{
  public:
    FieldError(std::string field, const std::string& what): Error(what), field_(std::move(field)) {}
    [[nodiscard]] auto field() const -> const std::string& { return field_; }

  private:
    std::string field_;
};

class ConfigError: public FieldError
{
  public:
    ConfigError(std::string field, const std::string& detail):
        FieldError(field, "invalid config field '" + field + "': " + detail)
    {
    }
};

class TaskParseError: public FieldError
{
  public:
    TaskParseError(std::string field, const std::string& detail):
        FieldError(field, "task file: missing or invalid '" + field + "': " + detail)
    {
    }
};

class FilesystemError: public Error
{
  public:
    using Error::Error;
};

class PreconditionError: public Error
{
  public:
    using Error::Error;
};

// block protocol
class DecisionParseError: public Error
{
  public:
    using Error::Error;
};

class StatusParseError: public Error
{
  public:
    using Error::Error;
};

// llm gateway
class TransportError: public Error
{
  public:
    using Error::Error;
};

/// Errors after which no further model call can succeed; the orchestrator aborts on these.
class FatalProviderError: public Error
{
  public:
    using Error::Error;
};

class AuthError: public FatalProviderError
{
  public:
    using FatalProviderError::FatalProviderError;
};

class ScriptExhausted: public FatalProviderError
{
  public:
    using FatalProviderError::FatalProviderError;
};

class TranscriptFormatError: public Error
{
  public:
    using Error::Error;
};

// exec session
class SessionError: public Error
{
  public:
    using Error::Error;
};

class SpawnError: public SessionError
{
  public:
    using SessionError::SessionError;
};

class HandshakeTimeout: public SessionError
{
  public:
    using SessionError::SessionError;
};

class SessionDead: public SessionError
{
  public:
    using SessionError::SessionError;
};

class FrameProtocolError: public SessionError
{
  public:
    using SessionError::SessionError;
};

class ScreenRejected: public SessionError
{
  public:
    using SessionError::SessionError;
};

// agents
class AgentFormatError: public Error
{
  public:
    using Error::Error;
};

class ProfileFormatError: public AgentFormatError
{
  public:
    using AgentFormatError::AgentFormatError;
};

class PlanFormatError: public AgentFormatError
{
  public:
    using AgentFormatError::AgentFormatError;
};

class FeedbackFormatError: public AgentFormatError
{
  public:
    using AgentFormatError::AgentFormatError;
};

class SectionFormatError: public AgentFormatError
{
  public:
    using AgentFormatError::AgentFormatError;
};

// scorekit
class DomainError: public Error
{
  public:
    using Error::Error;
};

class EmptyInput: public Error
{
  public:
    using Error::Error;
};

class MixedNominal: public Error
{
  public:
    using Error::Error;
};

} // namespace medloop
