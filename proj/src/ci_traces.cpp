#include "carbonfl/ci_traces.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "carbonfl/errors.hpp"
#include "carbonfl/timeutil.hpp"

namespace carbonfl {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (const char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_ci_value(const std::string& text, int line_no) {
    size_t used = 0;
    double v = 0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        raise(Errc::schema, "line " + std::to_string(line_no) + ": bad value '" + text + "'");
    }
    if (used != text.size())
        raise(Errc::schema, "line " + std::to_string(line_no) + ": bad value '" + text + "'");
    if (!std::isfinite(v) || v < 0)
        raise(Errc::schema,
              "line " + std::to_string(line_no) + ": carbon intensity must be finite and >= 0");
    return v;
}

}  // namespace

int CiTraceSet::region_index(const std::string& name) const {
    for (size_t i = 0; i < regions.size(); ++i)
        if (regions[i] == name) return static_cast<int>(i);
    return -1;
}

ClientProfile make_profile(int client_id, const std::string& region, double power_kw) {
    if (power_kw <= 0) raise(Errc::bad_config, "power_kw must be > 0");
    ClientProfile p;
    p.client_id = client_id;
    p.region = region;
    p.power_kw = power_kw;
    p.energy_per_slot_kwh = power_kw * 1.0;  // one-hour slots
    return p;
}

CiTraceSet load_ci_traces(const std::string& path, const std::vector<std::string>& regions,
                          int64_t start_hour, int hours, GapPolicy gap_policy) {
    if (hours <= 0) raise(Errc::bad_config, "hours must be >= 1");
    {
        std::set<std::string> uniq(regions.begin(), regions.end());
        if (uniq.size() != regions.size()) raise(Errc::bad_config, "duplicate region requested");
    }
    std::ifstream in(path);
    if (!in) raise(Errc::file_not_found, path);

    std::string line;
    if (!std::getline(in, line)) raise(Errc::schema, path + ": empty file");
    {
        const auto header = split_csv_line(line);
        if (header != std::vector<std::string>{"timestamp", "region", "ci_kg_per_kwh"})
            raise(Errc::schema, path + ": bad header '" + line + "'");
    }

    std::unordered_map<std::string, int> want;
    for (size_t i = 0; i < regions.size(); ++i) want[regions[i]] = static_cast<int>(i);

    CiTraceSet out;
    out.regions = regions;
    out.start_hour = start_hour;
    out.hours = hours;
    out.values.assign(regions.size(), std::vector<double>(hours, -1.0));
    std::vector<std::vector<uint8_t>> present(regions.size(), std::vector<uint8_t>(hours, 0));
    std::set<std::pair<std::string, int64_t>> seen;  // duplicate detection, all regions
    std::set<std::string> regions_in_file;

    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 3)
            raise(Errc::schema, path + ": line " + std::to_string(line_no) + ": expected 3 columns");
        const int64_t hour = parse_hour_utc(fields[0]);
        const std::string& region = fields[1];
        regions_in_file.insert(region);
        if (!seen.insert({region, hour}).second)
            raise(Errc::schema, path + ": line " + std::to_string(line_no) + ": duplicate (" +
                                    fields[0] + ", " + region + ")");
        const double value = parse_ci_value(fields[2], line_no);
        const auto it = want.find(region);
        if (it == want.end()) continue;
        const int64_t offset = hour - start_hour;
        if (offset < 0 || offset >= hours) continue;
        out.values[it->second][offset] = value;
        present[it->second][offset] = 1;
    }

    for (const auto& r : regions)
        if (!regions_in_file.count(r)) raise(Errc::unknown_region, r + " not present in " + path);

    for (size_t r = 0; r < regions.size(); ++r) {
        for (int h = 0; h < hours; ++h) {
            if (present[r][h]) continue;
            const std::string stamp = format_hour_utc(start_hour + h);
            if (gap_policy == GapPolicy::reject || h == 0)
                raise(Errc::gap, regions[r] + " missing hour " + stamp);
            out.values[r][h] = out.values[r][h - 1];
            ++out.filled_cells;
        }
    }
    return out;
}

void write_ci_csv(const CiTraceSet& traces, const std::string& path) {
    std::ofstream outf(path);
    if (!outf) raise(Errc::io, "cannot open " + path + " for writing");
    outf << "timestamp,region,ci_kg_per_kwh\n";
    char buf[64];
    for (size_t r = 0; r < traces.regions.size(); ++r) {
        for (int h = 0; h < traces.hours; ++h) {
            std::snprintf(buf, sizeof(buf), "%.6f", traces.values[r][h]);
            outf << format_hour_utc(traces.start_hour + h) << ',' << traces.regions[r] << ','
                 << buf << '\n';
        }
    }
    if (!outf) raise(Errc::io, "write failed: " + path);
}

CarbonCostMatrix carbon_cost_matrix(const CiTraceSet& traces,
                                    const std::vector<ClientProfile>& profiles, int horizon) {
    if (horizon <= 0) raise(Errc::bad_config, "horizon must be >= 1");
    if (horizon > traces.hours)
        raise(Errc::horizon_too_long, "horizon " + std::to_string(horizon) + " exceeds trace of " +
                                          std::to_string(traces.hours) + " hours");
    {
        std::set<int> ids;
        for (const auto& p : profiles)
            if (!ids.insert(p.client_id).second) raise(Errc::bad_config, "duplicate client_id");
    }
    CarbonCostMatrix m;
    m.horizon = horizon;
    m.costs.reserve(profiles.size());
    m.g_max = 0.0;
    for (const auto& p : profiles) {
        const int r = traces.region_index(p.region);
        if (r < 0) raise(Errc::unknown_region, p.region);
        std::vector<double> row(horizon);
        for (int t = 0; t < horizon; ++t) {
            row[t] = p.energy_per_slot_kwh * traces.values[r][t];
            if (row[t] > m.g_max) m.g_max = row[t];
        }
        m.costs.push_back(std::move(row));
    }
    return m;
}

}  // namespace carbonfl
