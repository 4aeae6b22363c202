#pragma once

#include <cstdint>
#include <fstream>
#include <string>

namespace echo {

// One row of the metrics CSV. The schema is stable:
//   run_id,phase,step,loss,tokens_seen,wall_ms,tokens_per_sec,mfu_percent
// phase is one of pretrain | stage-<k> | final | bench.
struct MetricsRow {
    std::string run_id;
    std::string phase;
    long step = 0;
    double loss = 0.0;
    std::uint64_t tokens_seen = 0;
    double wall_ms = 0.0;
    double tokens_per_sec = 0.0;
    double mfu_percent = 0.0;
};

inline constexpr const char* kMetricsCsvHeader =
    "run_id,phase,step,loss,tokens_seen,wall_ms,tokens_per_sec,mfu_percent";

std::string format_metrics_row(const MetricsRow& row);

// Opens the file, writes the header, appends rows. A default-constructed
// writer swallows rows, so callers can make --metrics optional.
class MetricsCsv {
  public:
    MetricsCsv() = default;
    explicit MetricsCsv(const std::string& path);

    void append(const MetricsRow& row);
    bool active() const { return out_.is_open(); }

  private:
    std::ofstream out_;
};

}  // namespace echo
