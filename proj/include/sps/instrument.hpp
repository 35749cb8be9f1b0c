#pragma once

#include <atomic>
#include <cstdint>

namespace sps {

/// Process-wide call counters used by tests and the CLI to verify structural
/// claims (encoder reuse across passes, promptless evaluation).
struct CallCounters {
  std::atomic<std::int64_t> encoder_calls{0};
  std::atomic<std::int64_t> decoder_calls{0};
  /// Prompts built from a ground-truth mask.
  std::atomic<std::int64_t> ground_truth_prompts{0};

  void reset() {
    encoder_calls = 0;
    decoder_calls = 0;
    ground_truth_prompts = 0;
  }
};

CallCounters& counters();

}  // namespace sps
