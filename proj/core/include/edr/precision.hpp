#pragma once

namespace edr {

// Global scalar width. f32 is the training/decoding default; gradient
// checking requires f64. Set once at startup, before any Tensor exists.
enum class Precision { f32, f64 };

Precision precision() noexcept;
void set_precision(Precision p) noexcept;

}  // namespace edr
