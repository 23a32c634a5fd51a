#pragma once

#include <stdexcept>
#include <string>

namespace handseq {

// Malformed input file (bad syntax, missing key, wrong element count).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally well-formed data that violates a model/mesh invariant.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Open surface, non-manifold edge, or other mesh topology defect.
class TopologyError : public ValidationError {
 public:
  explicit TopologyError(const std::string& what) : ValidationError(what) {}
};

// Caller broke a documented precondition (dimension mismatch, empty set, ...).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Optimization produced a non-finite objective.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace handseq
