#include "addopt/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "addopt/errors.hpp"

namespace addopt {

using json = nlohmann::ordered_json;

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw Error("failed writing '" + path + "'");
}

namespace {

// Minimal CSV: quoted fields may contain commas and doubled quotes. Rows are
// newline-terminated; a trailing \r is stripped.
std::vector<std::string> split_csv_row(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (quoted)
        throw CsvError("malformed CSV", {{line_no, "", "unterminated quoted field"}});
    fields.push_back(cur);
    return fields;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

bool parse_number(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

const std::vector<std::string> kHeader = {"id",          "lat",    "lon",
                                          "status",      "base_sales", "addon_sales",
                                          "income",      "population"};

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

}  // namespace

Network parse_sites_csv(const std::string& text, DistanceMetric metric,
                        const std::string& context) {
    std::vector<RowIssue> issues;
    std::vector<Site> sites;
    std::map<std::string, std::size_t> id_lines;

    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) throw CsvError(context, {{1, "", "empty file"}});
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    {
        auto header = split_csv_row(line, line_no);
        for (auto& h : header) h = lower(trim(h));
        if (header != kHeader)
            throw CsvError(context,
                           {{1, "", "header must be 'id,lat,lon,status,base_sales,addon_sales,"
                                    "income,population'"}});
    }

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto fields = split_csv_row(line, line_no);
        if (fields.size() != kHeader.size()) {
            issues.push_back({line_no, "", "expected 8 fields, got " +
                                               std::to_string(fields.size())});
            continue;
        }
        Site s;
        bool row_ok = true;
        const auto number_field = [&](std::size_t idx, const char* name, double& out) {
            if (!parse_number(trim(fields[idx]), out)) {
                issues.push_back({line_no, name, "not a number: '" + fields[idx] + "'"});
                row_ok = false;
            }
        };
        const auto optional_field = [&](std::size_t idx, const char* name,
                                        std::optional<double>& out) {
            const std::string v = trim(fields[idx]);
            if (v.empty()) {
                out.reset();
                return;
            }
            double d = 0.0;
            if (!parse_number(v, d)) {
                issues.push_back({line_no, name, "not a number: '" + fields[idx] + "'"});
                row_ok = false;
            } else {
                out = d;
            }
        };

        s.id = trim(fields[0]);
        if (s.id.empty()) {
            issues.push_back({line_no, "id", "empty id"});
            row_ok = false;
        }
        number_field(1, "lat", s.lat);
        number_field(2, "lon", s.lon);
        const std::string status = lower(trim(fields[3]));
        if (status == "active") {
            s.status = SiteStatus::Active;
        } else if (status == "candidate") {
            s.status = SiteStatus::Candidate;
        } else {
            issues.push_back({line_no, "status", "must be 'active' or 'candidate'"});
            row_ok = false;
        }
        optional_field(4, "base_sales", s.base_sales);
        optional_field(5, "addon_sales", s.addon_sales);
        number_field(6, "income", s.income);
        number_field(7, "population", s.population);
        if (!row_ok) continue;

        if (s.lat < -90.0 || s.lat > 90.0) {
            issues.push_back({line_no, "lat", "out of [-90, 90]"});
        } else if (s.lon < -180.0 || s.lon > 180.0) {
            issues.push_back({line_no, "lon", "out of [-180, 180]"});
        } else if (s.status == SiteStatus::Active && !s.base_sales) {
            issues.push_back({line_no, "base_sales", "active site requires base_sales"});
        } else if (s.status == SiteStatus::Active && !s.addon_sales) {
            issues.push_back({line_no, "addon_sales", "active site requires addon_sales"});
        } else if (s.status == SiteStatus::Candidate && s.addon_sales) {
            issues.push_back({line_no, "addon_sales", "candidate site cannot carry addon_sales"});
        } else if ((s.base_sales && *s.base_sales < 0.0) ||
                   (s.addon_sales && *s.addon_sales < 0.0) || s.income < 0.0 ||
                   s.population < 0.0) {
            issues.push_back({line_no, "", "negative value"});
        } else {
            auto [it, inserted] = id_lines.emplace(s.id, line_no);
            if (!inserted) {
                issues.push_back({line_no, "id",
                                  "duplicate id '" + s.id + "' (first at line " +
                                      std::to_string(it->second) + ")"});
            } else {
                sites.push_back(std::move(s));
            }
        }
    }

    if (!issues.empty()) throw CsvError(context, issues);
    // network-level validation (duplicate coordinates, size) propagates typed
    return Network(std::move(sites), metric);
}

Network load_sites(const std::string& path, DistanceMetric metric) {
    return parse_sites_csv(read_file(path), metric, "while loading '" + path + "'");
}

std::string sites_to_csv(const Network& net) {
    std::string out = "id,lat,lon,status,base_sales,addon_sales,income,population\n";
    for (const Site& s : net.sites()) {
        out += csv_quote(s.id);
        out += ',';
        out += format_double(s.lat);
        out += ',';
        out += format_double(s.lon);
        out += ',';
        out += s.status == SiteStatus::Active ? "active" : "candidate";
        out += ',';
        if (s.base_sales) out += format_double(*s.base_sales);
        out += ',';
        if (s.addon_sales) out += format_double(*s.addon_sales);
        out += ',';
        out += format_double(s.income);
        out += ',';
        out += format_double(s.population);
        out += '\n';
    }
    return out;
}

void save_sites(const Network& net, const std::string& path) {
    write_file(path, sites_to_csv(net));
}

namespace {

json vector_to_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Vector vector_from_json(const json& a) {
    Vector v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
    return v;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        rows.push_back(vector_to_json(m.row(i).transpose()));
    return rows;
}

Matrix matrix_from_json(const json& rows, Eigen::Index cols_hint) {
    const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    Eigen::Index c = cols_hint;
    if (r > 0) c = static_cast<Eigen::Index>(rows[0].size());
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        m.row(i) = vector_from_json(rows[static_cast<std::size_t>(i)]).transpose();
    return m;
}

}  // namespace

std::string model_to_json(const DemandModel& m) {
    json j;
    j["format"] = "addopt-model/1";
    j["feature_spec"] = {{"use_spatial_lag", m.spec.use_spatial_lag}};
    j["standardizer"] = {{"means", vector_to_json(m.standardizer.means())},
                         {"scales", vector_to_json(m.standardizer.scales())}};
    if (m.is_ols()) {
        j["variant"] = "ols";
        j["ols"] = {{"beta", vector_to_json(m.ols().beta)}};
    } else {
        const SvrModel& s = m.svr();
        j["variant"] = "svr";
        j["svr"] = {{"kernel", s.kernel == Kernel::Linear ? "linear" : "radial"},
                    {"gamma", s.gamma},
                    {"c", s.c},
                    {"epsilon", s.epsilon},
                    {"intercept", s.intercept},
                    {"dual_coefs", vector_to_json(s.dual_coefs)},
                    {"support_vectors", matrix_to_json(s.support_vectors)},
                    {"converged", s.converged},
                    {"iterations", s.iterations}};
    }
    return j.dump(2) + "\n";
}

DemandModel model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("invalid model file: ") + e.what());
    }
    if (j.value("format", "") != "addopt-model/1") throw Error("unknown model file format");

    DemandModel m;
    m.spec.use_spatial_lag = j.at("feature_spec").at("use_spatial_lag").get<bool>();
    m.standardizer = Standardizer::from_params(
        vector_from_json(j.at("standardizer").at("means")),
        vector_from_json(j.at("standardizer").at("scales")));
    const std::string variant = j.at("variant").get<std::string>();
    if (variant == "ols") {
        m.model = OlsModel{vector_from_json(j.at("ols").at("beta"))};
    } else if (variant == "svr") {
        const json& js = j.at("svr");
        SvrModel s;
        s.kernel = js.at("kernel").get<std::string>() == "radial" ? Kernel::Radial
                                                                  : Kernel::Linear;
        s.gamma = js.at("gamma").get<double>();
        s.c = js.at("c").get<double>();
        s.epsilon = js.at("epsilon").get<double>();
        s.intercept = js.at("intercept").get<double>();
        s.dual_coefs = vector_from_json(js.at("dual_coefs"));
        s.support_vectors =
            matrix_from_json(js.at("support_vectors"), m.standardizer.dim());
        s.converged = js.at("converged").get<bool>();
        s.iterations = js.at("iterations").get<long>();
        m.model = std::move(s);
    } else {
        throw Error("unknown model variant '" + variant + "'");
    }
    return m;
}

void save_model(const DemandModel& m, const std::string& path) {
    write_file(path, model_to_json(m));
}

DemandModel load_model(const std::string& path) {
    return model_from_json(read_file(path));
}

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct MapLayout {
    double min_lat, max_lat, min_lon, max_lon;
    double width = 860.0, height = 620.0, margin = 46.0;

    double x(double lon) const {
        const double span = std::max(max_lon - min_lon, 1e-9);
        return margin + (lon - min_lon) / span * (width - 2 * margin);
    }
    double y(double lat) const {
        const double span = std::max(max_lat - min_lat, 1e-9);
        return margin + (max_lat - lat) / span * (height - 2 * margin);
    }
};

void append_attr(std::string& svg, const char* name, const std::string& value) {
    svg += ' ';
    svg += name;
    svg += "=\"";
    svg += value;
    svg += '"';
}

}  // namespace

std::string map_svg(const Network& net, const ExpansionSolution& solution) {
    if (net.size() == 0) throw EmptyNetworkError();

    MapLayout lay{net.site(0).lat, net.site(0).lat, net.site(0).lon, net.site(0).lon};
    for (const Site& s : net.sites()) {
        lay.min_lat = std::min(lay.min_lat, s.lat);
        lay.max_lat = std::max(lay.max_lat, s.lat);
        lay.min_lon = std::min(lay.min_lon, s.lon);
        lay.max_lon = std::max(lay.max_lon, s.lon);
    }

    double g_min = 0.0, g_max = 0.0;
    bool have_g = false;
    for (int c : net.candidate_indices()) {
        const auto& g = net.site(c).base_sales;
        if (!g) continue;
        if (!have_g) {
            g_min = g_max = *g;
            have_g = true;
        } else {
            g_min = std::min(g_min, *g);
            g_max = std::max(g_max, *g);
        }
    }
    const double r_floor = 3.5, r_max = 11.0;
    const auto radius = [&](const std::optional<double>& g) {
        if (!g || !have_g) return r_floor;
        if (g_max == g_min) return 0.5 * (r_floor + r_max);
        return r_floor + (*g - g_min) / (g_max - g_min) * (r_max - r_floor);
    };

    std::vector<bool> chosen(static_cast<std::size_t>(net.size()), false);
    for (int i : solution.chosen) chosen[static_cast<std::size_t>(i)] = true;

    std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_double(lay.width) +
           "\" height=\"" + format_double(lay.height) + "\" viewBox=\"0 0 " +
           format_double(lay.width) + " " + format_double(lay.height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    // unchosen candidates first so selected markers stay on top
    for (int pass = 0; pass < 2; ++pass) {
        for (int c : net.candidate_indices()) {
            const bool sel = chosen[static_cast<std::size_t>(c)];
            if ((pass == 0) == sel) continue;
            const Site& s = net.site(c);
            svg += "<circle";
            append_attr(svg, "cx", format_double(lay.x(s.lon)));
            append_attr(svg, "cy", format_double(lay.y(s.lat)));
            append_attr(svg, "r", format_double(radius(s.base_sales)));
            append_attr(svg, "fill", sel ? "#2e6fdf" : "none");
            append_attr(svg, "stroke", sel ? "#1b4aa3" : "#8c8c8c");
            append_attr(svg, "stroke-width", "1.2");
            svg += "><title>" + xml_escape(s.id) + "</title></circle>\n";
        }
    }
    for (int a : net.active_indices()) {
        const Site& s = net.site(a);
        const double half = 4.5;
        svg += "<rect";
        append_attr(svg, "x", format_double(lay.x(s.lon) - half));
        append_attr(svg, "y", format_double(lay.y(s.lat) - half));
        append_attr(svg, "width", format_double(2 * half));
        append_attr(svg, "height", format_double(2 * half));
        append_attr(svg, "fill", "#f2b705");
        append_attr(svg, "stroke", "#8a6d00");
        append_attr(svg, "stroke-width", "1");
        svg += "><title>" + xml_escape(s.id) + "</title></rect>\n";
    }

    // legend
    const double lx = lay.margin, ly = lay.height - 18.0;
    svg += "<rect x=\"" + format_double(lx) + "\" y=\"" + format_double(ly - 9) +
           "\" width=\"9\" height=\"9\" fill=\"#f2b705\" stroke=\"#8a6d00\"/>\n";
    svg += "<text x=\"" + format_double(lx + 14) + "\" y=\"" + format_double(ly) +
           "\" font-family=\"sans-serif\" font-size=\"12\">active</text>\n";
    svg += "<circle cx=\"" + format_double(lx + 80) + "\" cy=\"" + format_double(ly - 4) +
           "\" r=\"5\" fill=\"none\" stroke=\"#8c8c8c\"/>\n";
    svg += "<text x=\"" + format_double(lx + 92) + "\" y=\"" + format_double(ly) +
           "\" font-family=\"sans-serif\" font-size=\"12\">candidate (sized by base sales)</text>\n";
    svg += "<circle cx=\"" + format_double(lx + 310) + "\" cy=\"" + format_double(ly - 4) +
           "\" r=\"5\" fill=\"#2e6fdf\" stroke=\"#1b4aa3\"/>\n";
    svg += "<text x=\"" + format_double(lx + 322) + "\" y=\"" + format_double(ly) +
           "\" font-family=\"sans-serif\" font-size=\"12\">chosen for expansion</text>\n";
    svg += "</svg>\n";
    return svg;
}

void emit_map_svg(const Network& net, const ExpansionSolution& solution,
                  const std::string& path) {
    write_file(path, map_svg(net, solution));
}

}  // namespace addopt
