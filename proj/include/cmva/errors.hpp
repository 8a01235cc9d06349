#pragma once
// Error taxonomy shared by every cmva module. Each condition named in an
// operation contract maps to one exception type below.

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cmva {

// Root of all domain errors. what() carries the detail message.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define CMVA_ERROR_TYPE(NAME)                              \
  class NAME : public Error {                              \
   public:                                                 \
    explicit NAME(const std::string& msg)                  \
        : Error(#NAME, msg) {}                             \
  }

// core-types
CMVA_ERROR_TYPE(DimensionMismatch);
CMVA_ERROR_TYPE(OutOfRange);
CMVA_ERROR_TYPE(DegenerateProfile);

// dataset-io
CMVA_ERROR_TYPE(FileNotFound);
CMVA_ERROR_TYPE(EmptyDataset);
CMVA_ERROR_TYPE(TooFewRecords);

// reward-models
CMVA_ERROR_TYPE(SingleClassData);
CMVA_ERROR_TYPE(NonFiniteLoss);

// policy-lm / rlft-ppo
CMVA_ERROR_TYPE(AbsoluteContinuityViolation);
CMVA_ERROR_TYPE(EmptyPromptSet);
CMVA_ERROR_TYPE(EmptyBatch);

// aggregator
CMVA_ERROR_TYPE(LengthMismatch);
CMVA_ERROR_TYPE(ZeroProbabilityTruth);
CMVA_ERROR_TYPE(MissingModel);
CMVA_ERROR_TYPE(ExternalBackendFailure);
CMVA_ERROR_TYPE(VocabMismatch);

// alignment-metrics
CMVA_ERROR_TYPE(ZeroVector);

// gateway-service
CMVA_ERROR_TYPE(DuplicateId);
CMVA_ERROR_TYPE(UnknownValue);
CMVA_ERROR_TYPE(InvalidProfile);
CMVA_ERROR_TYPE(NoAnswersAvailable);
CMVA_ERROR_TYPE(UnknownStrategy);

// cli / pipeline
CMVA_ERROR_TYPE(StageFailure);

#undef CMVA_ERROR_TYPE

// Malformed line in a JSONL file; carries the 1-based line number.
class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& msg)
      : Error("MalformedRecord",
              "line " + std::to_string(line) + ": " + msg),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace cmva
