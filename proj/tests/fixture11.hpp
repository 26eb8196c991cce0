// Hand-built 11-iteration fixture: a triangular solve feeding a matrix-vector
// product. The lower factor is designed so that partitioning its DAG for
// three workers yields window {0..8} with components {0,1,2,3}, {4,5},
// {6,7,8} and window {9,10}, which pins the fused-schedule regression.
#ifndef SPARSEFUSE_TEST_FIXTURE11_HPP
#define SPARSEFUSE_TEST_FIXTURE11_HPP

#include <sparsefuse/kernels.hpp>
#include <sparsefuse/matrix.hpp>

namespace fixture11 {

using sparsefuse::CscMatrix;
using sparsefuse::Index;

// Lower-triangular 11x11 factor. Strictly-lower entries (row, col):
// chains 0->1->2->3, 4->5, 6->7->8; row 9 depends on all of 0..8;
// row 10 depends on 3, 8, 9.
inline CscMatrix lower() {
  std::vector<std::vector<Index>> preds(11);
  preds[1] = {0};
  preds[2] = {1};
  preds[3] = {2};
  preds[5] = {4};
  preds[7] = {6};
  preds[8] = {7};
  preds[9] = {0, 1, 2, 3, 4, 5, 6, 7, 8};
  preds[10] = {3, 8, 9};
  // column-wise: column j holds the diagonal and the rows that list j
  std::vector<std::vector<Index>> colrows(11);
  for (Index i = 0; i < 11; ++i) {
    colrows[i].push_back(i);
    for (Index j : preds[i])
      colrows[j].push_back(i);
  }
  CscMatrix L;
  L.nrows = L.ncols = 11;
  L.colptr.assign(12, 0);
  for (Index j = 0; j < 11; ++j) {
    std::sort(colrows[j].begin(), colrows[j].end());
    for (Index i : colrows[j]) {
      L.rowidx.push_back(i);
      L.values.push_back(i == j ? 4.0 : -0.1);
    }
    L.colptr[j + 1] = static_cast<Index>(L.rowidx.size());
  }
  return L;
}

// SpMV operand: every column nonempty with exactly two entries, so the
// inter-kernel dependence is the identity and every iteration costs 2.
inline CscMatrix spmv_matrix() {
  CscMatrix A;
  A.nrows = A.ncols = 11;
  A.colptr.assign(12, 0);
  for (Index j = 0; j < 11; ++j) {
    Index r1 = j, r2 = (j + 1) % 11;
    if (r2 < r1)
      std::swap(r1, r2);
    A.rowidx.push_back(r1);
    A.values.push_back(r1 == j ? 1.0 : 0.5);
    A.rowidx.push_back(r2);
    A.values.push_back(r2 == j ? 1.0 : 0.5);
    A.colptr[j + 1] = static_cast<Index>(A.rowidx.size());
  }
  return A;
}

// Combination state wired directly (the solve and the product use different
// operands, unlike the generated-fixture path).
inline sparsefuse::KernelState state(std::uint64_t seed = 3) {
  sparsefuse::KernelState st;
  st.combo = sparsefuse::combo_by_id(4);
  st.n = 11;
  st.L_csr = sparsefuse::to_csr(lower());
  st.A_csc = spmv_matrix();
  st.vin = sparsefuse::gen_vector(11, seed);
  st.vmid.assign(11, 0.0);
  st.vout.assign(11, 0.0);
  return st;
}

} // namespace fixture11

#endif
