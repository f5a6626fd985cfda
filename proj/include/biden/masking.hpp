#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "numkit/tensor.hpp"

namespace biden {

// The three temporal decoupling masks plus the derived per-channel validity
// and the n x 3 fusion mask. Entries are additive: 0 = attend, kNegInf = not.
struct DecouplingMasks {
  int n = 0;
  numkit::Tensor<double> m_f2c, m_c2c, m_p2c;  // n x n
  numkit::Tensor<double> m_g;                  // n x 3, column order f2c,c2c,p2c
  std::vector<bool> valid_f2c, valid_c2c, valid_p2c;
  bool zero_mask_ablation = false;  // set by zero_masks(): partition is intentionally off
};

// m_f2c[i,j]=0 iff I(i)<I(j); m_c2c iff equal; m_p2c iff I(i)>I(j).
DecouplingMasks build_decoupling_masks(const std::vector<int>& utt_of_token);

// All-zero masks, every channel valid everywhere (the fully-connected-graphs
// ablation).
DecouplingMasks zero_masks(int n);

// 0 on/below the diagonal, kNegInf above.
numkit::Tensor<double> build_causal_mask(int m);

// Folds padding into a mask set: pad tokens become invisible as keys in every
// channel (min-combined key mask) and get all-invalid m_g rows as queries.
void apply_padding(DecouplingMasks& masks, const std::vector<bool>& is_pad);

// Read-mostly cache keyed by (I, pad flags). Thread-safe.
class MaskCache {
 public:
  std::shared_ptr<const DecouplingMasks> get_or_build(const std::vector<int>& utt_of_token,
                                                      const std::vector<bool>& is_pad);
  std::size_t size() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_ = make_impl();
  static std::shared_ptr<Impl> make_impl();
};

}  // namespace biden
