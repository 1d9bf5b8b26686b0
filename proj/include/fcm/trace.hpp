#pragma once

// Optional record of intermediate values from one forward pass, for
// invariant checks. Passing nullptr skips all recording.

#include <string>
#include <vector>

#include "fcm/tensor.hpp"

namespace fcm {

struct AttentionRecord {
  std::string name;
  Tensor weights;
  Mask valid;
};

// out = gate * a + (1 - gate) * b on the rows where row_mask is set.
struct GateRecord {
  std::string name;
  Tensor gate;
  Tensor a;
  Tensor b;
  Tensor out;
  std::vector<std::uint8_t> row_mask;
};

struct ForwardTrace {
  std::vector<AttentionRecord> attention;
  std::vector<GateRecord> gates;
  std::vector<Tensor> probabilities;
};

}  // namespace fcm
