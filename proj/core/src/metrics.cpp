#include "msnet/metrics.hpp"

#include "msnet/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace msnet {

std::string format_number(double v)
{
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{})
        return "nan";
    return std::string(buf, p);
}

void MetricsSink::emit(Nanos t, std::string_view source, std::string_view metric, double value)
{
    MetricsRow row{static_cast<double>(t.count()) / 1e9, std::string(source), std::string(metric),
                   value};
    std::lock_guard lock(mu_);
    rows_.push_back(std::move(row));
}

std::vector<MetricsRow> MetricsSink::rows() const
{
    std::lock_guard lock(mu_);
    return rows_;
}

std::size_t MetricsSink::size() const
{
    std::lock_guard lock(mu_);
    return rows_.size();
}

std::string MetricsSink::to_csv() const
{
    std::string out(kHeader);
    out += '\n';
    std::lock_guard lock(mu_);
    for (const auto& r : rows_) {
        out += format_number(r.t);
        out += ',';
        out += r.source;
        out += ',';
        out += r.metric;
        out += ',';
        out += format_number(r.value);
        out += '\n';
    }
    return out;
}

void MetricsSink::write_csv(const std::string& path) const
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw Error(Errc::InvalidArgument, "cannot open metrics file " + path);
    f << to_csv();
    if (!f)
        throw Error(Errc::InvalidArgument, "cannot write metrics file " + path);
}

namespace {

double parse_double(std::string_view s, std::size_t line)
{
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw Error(Errc::InvalidArgument,
                    "line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
    return v;
}

}  // namespace

std::vector<MetricsRow> parse_metrics_csv(std::string_view text)
{
    std::vector<MetricsRow> rows;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        if (line_no == 1) {
            if (line != MetricsSink::kHeader)
                throw Error(Errc::InvalidArgument, "unexpected metrics header '" + std::string(line) + "'");
            continue;
        }
        if (line.empty())
            continue;
        std::string_view fields[4];
        std::size_t start = 0;
        for (int i = 0; i < 3; ++i) {
            const auto comma = line.find(',', start);
            if (comma == std::string_view::npos)
                throw Error(Errc::InvalidArgument, "line " + std::to_string(line_no) + ": too few fields");
            fields[i] = line.substr(start, comma - start);
            start = comma + 1;
        }
        fields[3] = line.substr(start);
        if (fields[3].find(',') != std::string_view::npos)
            throw Error(Errc::InvalidArgument, "line " + std::to_string(line_no) + ": too many fields");
        rows.push_back(MetricsRow{parse_double(fields[0], line_no), std::string(fields[1]),
                                  std::string(fields[2]), parse_double(fields[3], line_no)});
    }
    if (line_no == 0)
        throw Error(Errc::InvalidArgument, "empty metrics file");
    return rows;
}

bool is_wall_clock_metric(std::string_view metric) noexcept
{
    return metric.ends_with("_wall_ms");
}

std::string deterministic_view(std::string_view csv_text)
{
    std::string out(MetricsSink::kHeader);
    out += '\n';
    for (const auto& r : parse_metrics_csv(csv_text)) {
        if (is_wall_clock_metric(r.metric))
            continue;
        out += format_number(r.t) + ',' + r.source + ',' + r.metric + ',' + format_number(r.value) + '\n';
    }
    return out;
}

}  // namespace msnet
