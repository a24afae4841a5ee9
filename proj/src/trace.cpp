#include "derflex/trace.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "derflex/errors.hpp"

namespace derflex {

void FleetTrace::reserve(std::size_t n, bool with_requests) {
    t_s.reserve(n);
    p_ref_kw.reserve(n);
    p_dem_kw.reserve(n);
    n_charge.reserve(n);
    n_discharge.reserve(n);
    n_standby.reserve(n);
    n_optout.reserve(n);
    if (with_requests) {
        n_req_c.reserve(n);
        n_req_d.reserve(n);
        n_grant_c.reserve(n);
        n_grant_d.reserve(n);
    }
}

void FleetTrace::record(double t, double ref_kw, double dem_kw, const Fleet& fleet) {
    int counts[4] = {0, 0, 0, 0};
    for (const auto& d : fleet.devices) ++counts[static_cast<int>(d.state.mode)];
    t_s.push_back(t);
    p_ref_kw.push_back(ref_kw);
    p_dem_kw.push_back(dem_kw);
    n_charge.push_back(counts[static_cast<int>(Mode::Charge)]);
    n_discharge.push_back(counts[static_cast<int>(Mode::Discharge)]);
    n_standby.push_back(counts[static_cast<int>(Mode::Standby)]);
    n_optout.push_back(counts[static_cast<int>(Mode::OptOut)]);
}

void write_trace_csv(std::ostream& out, const FleetTrace& trace) {
    const bool req = trace.has_requests();
    out << "t_s,p_ref_kw,p_dem_kw,n_charge,n_discharge,n_standby,n_optout";
    if (req) out << ",n_req_c,n_req_d,n_grant_c,n_grant_d";
    out << '\n' << std::setprecision(12);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out << trace.t_s[i] << ',' << trace.p_ref_kw[i] << ',' << trace.p_dem_kw[i] << ',' << trace.n_charge[i]
            << ',' << trace.n_discharge[i] << ',' << trace.n_standby[i] << ',' << trace.n_optout[i];
        if (req) {
            out << ',' << trace.n_req_c[i] << ',' << trace.n_req_d[i] << ',' << trace.n_grant_c[i] << ','
                << trace.n_grant_d[i];
        }
        out << '\n';
    }
}

void write_trace_csv(const std::filesystem::path& path, const FleetTrace& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write trace: " + path.string());
    write_trace_csv(out, trace);
}

FleetTrace read_trace_csv(std::istream& in) {
    FleetTrace trace;
    std::string line;
    if (!std::getline(in, line)) throw DataError("trace CSV is empty");
    if (line.rfind("t_s,p_ref_kw,p_dem_kw", 0) != 0) throw DataError("trace CSV has an unexpected header");
    const bool req = line.find("n_req_c") != std::string::npos;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<double> v;
        while (std::getline(row, cell, ',')) {
            try {
                v.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw DataError("trace CSV line " + std::to_string(line_no) + ": not numeric");
            }
        }
        const std::size_t expected = req ? 11 : 7;
        if (v.size() != expected) throw DataError("trace CSV line " + std::to_string(line_no) + ": wrong arity");
        trace.t_s.push_back(v[0]);
        trace.p_ref_kw.push_back(v[1]);
        trace.p_dem_kw.push_back(v[2]);
        trace.n_charge.push_back(static_cast<int>(v[3]));
        trace.n_discharge.push_back(static_cast<int>(v[4]));
        trace.n_standby.push_back(static_cast<int>(v[5]));
        trace.n_optout.push_back(static_cast<int>(v[6]));
        if (req) {
            trace.n_req_c.push_back(static_cast<int>(v[7]));
            trace.n_req_d.push_back(static_cast<int>(v[8]));
            trace.n_grant_c.push_back(static_cast<int>(v[9]));
            trace.n_grant_d.push_back(static_cast<int>(v[10]));
        }
    }
    if (trace.size() < 2) throw DataError("trace CSV needs at least two rows");
    trace.dt_seconds = trace.t_s[1] - trace.t_s[0];
    if (!(trace.dt_seconds > 0.0)) throw DataError("trace CSV times are not increasing");
    return trace;
}

FleetTrace read_trace_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open trace: " + path.string());
    return read_trace_csv(in);
}

}  // namespace derflex
