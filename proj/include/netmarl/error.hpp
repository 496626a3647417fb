#pragma once

#include <stdexcept>
#include <string>

namespace netmarl {

/// Base of every error raised by the library. `kind()` is the stable name
/// used in CLI diagnostics and by the python bindings.
class Error : public std::runtime_error {
 public:
  Error(const char* kind, const std::string& what)
      : std::runtime_error(std::string(kind) + ": " + what), kind_(kind) {}
  const char* kind() const noexcept { return kind_; }

 private:
  const char* kind_;
};

#define NETMARL_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what) : Error(#Name, what) {}  \
  };

// graph
NETMARL_DEFINE_ERROR(UnknownAgent)
NETMARL_DEFINE_ERROR(NoBlockableRoad)
NETMARL_DEFINE_ERROR(InvalidGraph)
// traffic
NETMARL_DEFINE_ERROR(InvalidAction)
// diffcore
NETMARL_DEFINE_ERROR(ShapeMismatch)
NETMARL_DEFINE_ERROR(EmptyInbox)
NETMARL_DEFINE_ERROR(MissingGradient)
// policy
NETMARL_DEFINE_ERROR(NonNeighborMessage)
NETMARL_DEFINE_ERROR(WrongTick)
// trainer
NETMARL_DEFINE_ERROR(IncompleteLog)
NETMARL_DEFINE_ERROR(EmptyEvaluation)
NETMARL_DEFINE_ERROR(CheckpointMismatch)
// langlab
NETMARL_DEFINE_ERROR(NotNeighbors)
NETMARL_DEFINE_ERROR(EmptyLogs)
NETMARL_DEFINE_ERROR(ConvergenceFailure)
NETMARL_DEFINE_ERROR(InsufficientData)
NETMARL_DEFINE_ERROR(DegeneratePartition)
// persistence / config
NETMARL_DEFINE_ERROR(FormatError)
NETMARL_DEFINE_ERROR(ConfigError)
NETMARL_DEFINE_ERROR(IoError)

#undef NETMARL_DEFINE_ERROR

}  // namespace netmarl
