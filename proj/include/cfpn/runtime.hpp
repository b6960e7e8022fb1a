#pragma once

namespace cfpn {

/// Keeps large freed blocks in the heap instead of returning them to the OS.
/// Convolution buffers of tens of megabytes are allocated on every step; with
/// the default glibc thresholds each one is a fresh mmap and page-fault storm.
/// No-op on other C libraries. Call once at program start.
void tune_allocator();

}  // namespace cfpn
