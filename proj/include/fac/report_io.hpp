#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "fac/diagnostics.hpp"
#include "fac/leakage.hpp"
#include "fac/protocol.hpp"

namespace fac {

/// 64-bit FNV-1a, 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

// Binary prediction file, little-endian:
//   "FACTRACE" u32 version u32 mode u64 L H C nominal_batch batches
//   char[16] config hash
//   per batch: i64 anchor, u64 size, then f64 arrays [size x H x C] for
//   targets, source, pre, post, final.
inline constexpr std::uint32_t kTraceVersion = 1;

struct StoredTrace {
    RunTrace trace;  // predictions and plan only; losses and logs are not stored
    std::string config_hash;
};

void write_trace_binary(const RunTrace& trace, const std::string& config_hash, const std::filesystem::path& path);
StoredTrace read_trace_binary(const std::filesystem::path& path);

/// JSON summary: shapes, counts, notices, per-batch losses.
std::string trace_summary_json(const RunTrace& trace, const std::string& config_hash);

// CSV exports, each starting with a "# config_hash=<hash>" line.
//   batches: batch,anchor,size,supervised,steps,skipped,first_loss,last_loss,adapt_ms
//   windows: window,batch,sample,anchor,source_mse,final_mse,final_mae
std::string batches_csv(const RunTrace& trace, const std::string& config_hash);
std::string windows_csv(const RunTrace& trace, const std::string& config_hash);

/// Deterministic fields at top level, wall-clock fields under "timing".
std::string report_json(const EvalReport& report, const std::string& config_hash);
std::string leakage_json(const LeakageReport& report, const std::string& config_hash);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace fac
