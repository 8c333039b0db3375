#pragma once

#include <cstdint>

namespace vslr {

// Multiply-add counts observed while a ScopedOpCounter is alive on this thread.
// `attention_macs` covers only the score (QK^T) and mixing (AV) products.
struct OpCounts {
  std::uint64_t matmul_macs = 0;
  std::uint64_t attention_macs = 0;
};

class ScopedOpCounter {
 public:
  ScopedOpCounter();
  ~ScopedOpCounter();
  ScopedOpCounter(const ScopedOpCounter&) = delete;
  ScopedOpCounter& operator=(const ScopedOpCounter&) = delete;

  const OpCounts& counts() const { return counts_; }

 private:
  OpCounts counts_;
  OpCounts* previous_;
};

// Marks matmuls issued inside its lifetime as attention-core products.
class AttentionCoreScope {
 public:
  AttentionCoreScope();
  ~AttentionCoreScope();
  AttentionCoreScope(const AttentionCoreScope&) = delete;
  AttentionCoreScope& operator=(const AttentionCoreScope&) = delete;

 private:
  bool previous_;
};

void count_macs(std::uint64_t macs);

}  // namespace vslr
