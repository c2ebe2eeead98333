#pragma once

#include "msnet/types.hpp"

#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace msnet {

struct MetricsRow {
    double t = 0.0;
    std::string source;
    std::string metric;
    double value = 0.0;

    friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

/// Append-only collector of metric rows, shared by every task of a run and
/// written out as `t,source,metric,value` CSV.
class MetricsSink {
  public:
    static constexpr std::string_view kHeader = "t,source,metric,value";

    void emit(Nanos t, std::string_view source, std::string_view metric, double value);
    std::vector<MetricsRow> rows() const;
    std::size_t size() const;

    std::string to_csv() const;
    /// Throws Error(InvalidArgument) when the file cannot be written.
    void write_csv(const std::string& path) const;

  private:
    mutable std::mutex mu_;
    std::vector<MetricsRow> rows_;
};

/// Shortest text that parses back to exactly v.
std::string format_number(double v);

/// Parses CSV produced by MetricsSink; throws Error(InvalidArgument) on a bad
/// header or malformed row.
std::vector<MetricsRow> parse_metrics_csv(std::string_view text);

/// True for metrics measured in wall-clock time, which vary from run to run.
bool is_wall_clock_metric(std::string_view metric) noexcept;

/// CSV text with wall-clock metrics removed, for run-to-run comparison.
std::string deterministic_view(std::string_view csv_text);

}  // namespace msnet
