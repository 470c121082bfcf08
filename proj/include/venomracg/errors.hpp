#pragma once

#include <stdexcept>
#include <string>

namespace venomracg {

/// Base of every error raised by the library. Each subclass names one
/// failure condition so callers can map them to exit codes or skip reports.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

#define VENOMRACG_DEFINE_ERROR(Name)                                           \
  class Name : public Error {                                                  \
  public:                                                                      \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {}       \
  }

VENOMRACG_DEFINE_ERROR(LexError);
VENOMRACG_DEFINE_ERROR(InsufficientVocabulary);
VENOMRACG_DEFINE_ERROR(DegenerateBatch);
VENOMRACG_DEFINE_ERROR(EmptyKnowledgeBase);
VENOMRACG_DEFINE_ERROR(CorruptCheckpoint);
VENOMRACG_DEFINE_ERROR(NoInjectionSite);
VENOMRACG_DEFINE_ERROR(DegenerateInput);
VENOMRACG_DEFINE_ERROR(PoolExhausted);
VENOMRACG_DEFINE_ERROR(DuplicateId);
VENOMRACG_DEFINE_ERROR(MissingProxy);
VENOMRACG_DEFINE_ERROR(PowerIterationDiverged);
VENOMRACG_DEFINE_ERROR(MissingGold);
VENOMRACG_DEFINE_ERROR(EmptyContext);
VENOMRACG_DEFINE_ERROR(ConfigError);
VENOMRACG_DEFINE_ERROR(FormatError);

#undef VENOMRACG_DEFINE_ERROR

/// A module error re-raised by the experiment pipeline with the stage that
/// produced it.
class StageError : public Error {
public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

private:
  std::string stage_;
};

} // namespace venomracg
