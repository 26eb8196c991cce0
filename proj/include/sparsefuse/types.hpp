#ifndef SPARSEFUSE_TYPES_HPP
#define SPARSEFUSE_TYPES_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparsefuse {

using Index = std::int32_t;
using Cost = std::int64_t;
using DenseVector = std::vector<double>;

// Thrown when a factorization hits an unusable pivot. `index` is the
// column (CSC kernels) or row (CSR kernels) where the breakdown occurred.
class FactorizationError : public std::runtime_error {
public:
  FactorizationError(const std::string& what, Index index)
      : std::runtime_error(what + " at index " + std::to_string(index)),
        index_(index) {}
  Index index() const noexcept { return index_; }

private:
  Index index_;
};

class InvalidMatrixError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace sparsefuse

#endif
