#pragma once

#include <string_view>

namespace covseg::kernels {

// Instruction-set variants each kernel family is built for. The scalar
// variant is the reference every SIMD variant is tested against.
enum class Isa { scalar, avx2, avx512 };

std::string_view isa_name(Isa isa) noexcept;

// True when the running CPU can execute kernels compiled for `isa`.
bool isa_supported(Isa isa) noexcept;

// Best supported variant, honoring the COVSEG_ISA environment variable
// ("scalar", "avx2", "avx512") when it names a supported variant.
Isa detect_isa() noexcept;

// Variant used by the dispatching entry points. Defaults to detect_isa().
Isa active_isa() noexcept;

// Throws std::invalid_argument when the CPU lacks `isa`.
void set_active_isa(Isa isa);

// Restores the previous active variant on scope exit.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

}  // namespace covseg::kernels
