#include "vslr/op_counter.hpp"

namespace vslr {

namespace {
thread_local OpCounts* g_counts = nullptr;
thread_local bool g_in_attention = false;
}  // namespace

ScopedOpCounter::ScopedOpCounter() : previous_(g_counts) { g_counts = &counts_; }
ScopedOpCounter::~ScopedOpCounter() { g_counts = previous_; }

AttentionCoreScope::AttentionCoreScope() : previous_(g_in_attention) { g_in_attention = true; }
AttentionCoreScope::~AttentionCoreScope() { g_in_attention = previous_; }

void count_macs(std::uint64_t macs) {
  if (!g_counts) return;
  g_counts->matmul_macs += macs;
  if (g_in_attention) g_counts->attention_macs += macs;
}

}  // namespace vslr
