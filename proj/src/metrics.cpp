#include "echo/metrics.hpp"

#include "echo/errors.hpp"

#include <cinttypes>
#include <cstdio>

namespace echo {

std::string format_metrics_row(const MetricsRow& row) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.9g,%" PRIu64 ",%.3f,%.3f,%.3f", row.loss,
                  static_cast<std::uint64_t>(row.tokens_seen), row.wall_ms, row.tokens_per_sec,
                  row.mfu_percent);
    return row.run_id + "," + row.phase + "," + std::to_string(row.step) + "," + buf;
}

MetricsCsv::MetricsCsv(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) throw DataError("cannot open metrics file '" + path + "'");
    out_ << kMetricsCsvHeader << "\n";
}

void MetricsCsv::append(const MetricsRow& row) {
    if (!out_.is_open()) return;
    out_ << format_metrics_row(row) << "\n";
    out_.flush();
}

}  // namespace echo
