#include "gridstep/case_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include "gridstep/errors.hpp"

namespace gridstep {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

struct Cell {
  double value;
  std::size_t line;
  std::size_t column;
};

struct Row {
  std::vector<Cell> cells;
  std::size_t line = 0;
};

struct Matrix {
  std::vector<Row> rows;
  std::size_t line = 0;
};

struct ParsedFile {
  std::map<std::string, Matrix> matrices;
  std::map<std::string, Cell> scalars;
  std::vector<std::string> skipped;
};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == ','; }

double parse_number(std::string_view tok, std::size_t line, std::size_t col) {
  std::string lower(tok);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "inf" || lower == "+inf") return std::numeric_limits<double>::infinity();
  if (lower == "-inf") return -std::numeric_limits<double>::infinity();
  if (lower == "nan") return std::numeric_limits<double>::quiet_NaN();
  double value = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("malformed number '" + std::string(tok) + "'", line, col);
  return value;
}

// Splits "mpc.name = rhs" and returns (name, offset of rhs) if the line assigns a field.
std::optional<std::pair<std::string, std::size_t>> field_assignment(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && is_space(line[i])) ++i;
  auto rest = line.substr(i);
  if (rest.substr(0, 4) != "mpc.") return std::nullopt;
  std::size_t j = i + 4;
  std::size_t name_start = j;
  while (j < line.size() && (std::isalnum(static_cast<unsigned char>(line[j])) || line[j] == '_')) ++j;
  std::string name(line.substr(name_start, j - name_start));
  while (j < line.size() && is_space(line[j])) ++j;
  if (j >= line.size() || line[j] != '=') return std::nullopt;
  return std::make_pair(name, j + 1);
}

std::string_view strip_comment(std::string_view line) {
  bool in_quote = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\'') in_quote = !in_quote;
    if (line[i] == '%' && !in_quote) return line.substr(0, i);
  }
  return line;
}

ParsedFile scan(std::string_view text) {
  ParsedFile out;
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start <= text.size();) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }

  Matrix* open_matrix = nullptr;
  std::string open_name;
  Row current;
  bool in_cell_array = false;

  auto flush_row = [&]() {
    if (!current.cells.empty()) open_matrix->rows.push_back(std::move(current));
    current = Row{};
  };

  // Consumes matrix body text starting at `pos`; returns true when the closing bracket was seen.
  auto consume_matrix = [&](std::string_view line, std::size_t line_no, std::size_t pos) {
    while (pos < line.size()) {
      char c = line[pos];
      if (is_space(c)) {
        ++pos;
        continue;
      }
      if (c == ';') {
        flush_row();
        ++pos;
        continue;
      }
      if (c == ']') {
        flush_row();
        return true;
      }
      if (line.substr(pos, 3) == "...") return false;
      std::size_t tok_start = pos;
      while (pos < line.size() && !is_space(line[pos]) && line[pos] != ';' && line[pos] != ']') ++pos;
      auto tok = line.substr(tok_start, pos - tok_start);
      if (current.cells.empty()) current.line = line_no;
      current.cells.push_back({parse_number(tok, line_no, tok_start + 1), line_no, tok_start + 1});
    }
    // A newline ends a row unless the line was continued.
    flush_row();
    return false;
  };

  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    auto line = strip_comment(lines[n]);

    if (in_cell_array) {
      if (line.find('}') != std::string_view::npos) in_cell_array = false;
      continue;
    }
    if (open_matrix) {
      if (consume_matrix(line, line_no, 0)) open_matrix = nullptr;
      continue;
    }

    auto assign = field_assignment(line);
    if (!assign) continue;  // function header, blank lines, stray statements
    auto [name, rhs_pos] = *assign;
    std::size_t p = rhs_pos;
    while (p < line.size() && is_space(line[p])) ++p;
    if (p >= line.size()) throw ParseError("missing value for mpc." + name, line_no, p + 1);

    if (line[p] == '[') {
      auto& m = out.matrices[name];
      if (!m.rows.empty()) throw ParseError("mpc." + name + " assigned twice", line_no, p + 1);
      m.line = line_no;
      open_matrix = &m;
      open_name = name;
      current = Row{};
      if (consume_matrix(line, line_no, p + 1)) open_matrix = nullptr;
    } else if (line[p] == '{') {
      out.skipped.push_back(name);
      if (line.find('}', p) == std::string_view::npos) in_cell_array = true;
    } else if (line[p] == '\'') {
      if (name != "version") out.skipped.push_back(name);
    } else {
      std::size_t e = p;
      while (e < line.size() && line[e] != ';' && !is_space(line[e])) ++e;
      out.scalars[name] = {parse_number(line.substr(p, e - p), line_no, p + 1), line_no, p + 1};
    }
  }
  if (open_matrix) throw ParseError("unterminated matrix mpc." + open_name, open_matrix->line, 1);
  return out;
}

const Matrix& require_matrix(const ParsedFile& f, const std::string& name) {
  auto it = f.matrices.find(name);
  if (it == f.matrices.end()) throw StructuralError("case file has no mpc." + name + " matrix");
  return it->second;
}

void require_width(const Row& row, std::size_t width, const std::string& name) {
  if (row.cells.size() < width) {
    std::size_t col = row.cells.empty() ? 1 : row.cells.back().column;
    throw ParseError("mpc." + name + " row has " + std::to_string(row.cells.size()) + " columns, needs at least " +
                         std::to_string(width),
                     row.line, col);
  }
}

int as_int(const Cell& c, const std::string& what) {
  double r = std::round(c.value);
  if (!std::isfinite(c.value) || std::abs(r - c.value) > 1e-9)
    throw ParseError(what + " must be an integer", c.line, c.column);
  return static_cast<int>(r);
}

}  // namespace

Network parse_case(std::string_view text, std::vector<std::string>* warnings) {
  auto warn = [&](std::string w) {
    if (warnings) warnings->push_back(std::move(w));
  };

  ParsedFile f = scan(text);
  auto base_it = f.scalars.find("baseMVA");
  if (base_it == f.scalars.end()) throw StructuralError("case file has no mpc.baseMVA");
  const double base = base_it->second.value;
  if (!(base > 0.0)) throw ParseError("baseMVA must be positive", base_it->second.line, base_it->second.column);

  const Matrix& bus_m = require_matrix(f, "bus");
  const Matrix& gen_m = require_matrix(f, "gen");
  const Matrix& branch_m = require_matrix(f, "branch");
  for (const auto& name : f.skipped) warn("ignored unsupported field mpc." + name);
  for (const auto& [name, m] : f.matrices)
    if (name != "bus" && name != "gen" && name != "branch" && name != "gencost")
      warn("ignored unsupported matrix mpc." + name);

  NetworkData d;
  d.base_mva = base;

  std::set<int> bus_ids;
  for (const auto& row : bus_m.rows) {
    require_width(row, 13, "bus");
    const auto& c = row.cells;
    Bus b;
    b.id = as_int(c[0], "bus id");
    if (!bus_ids.insert(b.id).second) throw ValidationError("duplicate bus id " + std::to_string(b.id) +
                                                            " at line " + std::to_string(row.line));
    int type = as_int(c[1], "bus type");
    switch (type) {
      case 1: b.kind = BusKind::PQ; break;
      case 2: b.kind = BusKind::PV; break;
      case 3: b.kind = BusKind::Slack; break;
      case 4:
        b.kind = BusKind::PQ;
        warn("bus " + std::to_string(b.id) + " is typed isolated (4); treated as PQ");
        break;
      default: throw ParseError("unknown bus type " + std::to_string(type), c[1].line, c[1].column);
    }
    double pd = c[2].value / base;
    double qd = c[3].value / base;
    if (pd != 0.0 || qd != 0.0) d.loads.push_back(Load{b.id, b.id, pd, qd, 1.0});
    b.shunt_g = c[4].value / base;
    b.shunt_b = c[5].value / base;
    b.area = as_int(c[6], "bus area");
    b.vm_init = c[7].value;
    b.va_init = c[8].value * kDegToRad;
    b.base_kv = c[9].value;
    b.v_max = c[11].value;
    b.v_min = c[12].value;
    b.v_set = b.vm_init;
    b.angle_set = b.va_init;
    if (row.cells.size() > 13) warn("bus " + std::to_string(b.id) + ": columns beyond Vmin ignored");
    d.buses.push_back(b);
  }

  int gen_row = 0;
  for (const auto& row : gen_m.rows) {
    require_width(row, 10, "gen");
    const auto& c = row.cells;
    Generator g;
    g.id = ++gen_row;
    g.bus = as_int(c[0], "generator bus");
    g.p_set = c[1].value / base;
    g.q_set = c[2].value / base;
    g.q_max = c[3].value / base;
    g.q_min = c[4].value / base;
    g.v_set = c[5].value;
    g.status = c[7].value > 0 ? Status::In : Status::Out;
    g.p_max = c[8].value / base;
    g.p_min = c[9].value / base;
    d.generators.push_back(g);
  }
  if (!gen_m.rows.empty() && gen_m.rows.front().cells.size() > 10)
    warn("gen: columns beyond Pmin (capability curve, ramp rates, apf) ignored");

  int branch_row = 0;
  for (const auto& row : branch_m.rows) {
    require_width(row, 11, "branch");
    const auto& c = row.cells;
    Branch br;
    br.id = ++branch_row;
    br.from_bus = as_int(c[0], "branch from bus");
    br.to_bus = as_int(c[1], "branch to bus");
    br.series_r = c[2].value;
    br.series_x = c[3].value;
    br.charging_b = c[4].value;
    if (c[5].value > 0.0) br.flow_limit = c[5].value / base;
    br.tap_ratio = c[8].value == 0.0 ? 1.0 : c[8].value;
    br.phase_shift = c[9].value * kDegToRad;
    br.status = c[10].value > 0 ? Status::In : Status::Out;
    d.branches.push_back(br);
  }
  if (!branch_m.rows.empty() && branch_m.rows.front().cells.size() > 11)
    warn("branch: rateB/rateC and angle limits ignored");

  auto cost_it = f.matrices.find("gencost");
  if (cost_it == f.matrices.end()) {
    warn("no mpc.gencost; generation costs set to zero");
  } else {
    const auto& rows = cost_it->second.rows;
    if (rows.size() < d.generators.size())
      throw StructuralError("mpc.gencost has fewer rows than mpc.gen");
    if (rows.size() > d.generators.size()) warn("reactive-power cost rows in mpc.gencost ignored");
    for (std::size_t i = 0; i < d.generators.size(); ++i) {
      const auto& row = rows[i];
      require_width(row, 4, "gencost");
      const auto& c = row.cells;
      int model = as_int(c[0], "gencost model");
      int n = as_int(c[3], "gencost n");
      if (model != 2) {
        warn("generator " + std::to_string(d.generators[i].id) + ": piecewise-linear cost ignored");
        continue;
      }
      require_width(row, 4 + static_cast<std::size_t>(std::max(n, 0)), "gencost");
      // Coefficients are listed highest order first; keep the three lowest orders.
      auto coeff = [&](int order) { return order < n ? c[4 + (n - 1 - order)].value : 0.0; };
      if (n > 3) warn("generator " + std::to_string(d.generators[i].id) + ": cost terms above quadratic ignored");
      d.generators[i].cost = CostModel{coeff(2), coeff(1), coeff(0)};
    }
  }

  // Voltage-controlled buses take their setpoint from the first in-service generator.
  for (auto& b : d.buses) {
    if (b.kind == BusKind::PQ) continue;
    for (const auto& g : d.generators)
      if (g.bus == b.id && g.status == Status::In) {
        b.v_set = g.v_set;
        break;
      }
  }

  return Network(std::move(d));
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

Network load_case_file(const std::string& path, std::vector<std::string>* warnings) {
  return parse_case(read_text_file(path), warnings);
}

Network load_network(const std::string& path, std::vector<std::string>* warnings) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") return network_from_json(read_text_file(path));
  return load_case_file(path, warnings);
}

std::string write_case(const Network& net) {
  std::ostringstream out;
  out << std::setprecision(17);
  const double base = net.base_mva();
  auto name = net.name().empty() ? std::string("case") : net.name();
  out << "function mpc = " << name << "\n";
  out << "mpc.version = '2';\n";
  out << "mpc.baseMVA = " << base << ";\n\n";

  out << "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n";
  out << "mpc.bus = [\n";
  for (const auto& b : net.buses()) {
    double pd = 0.0, qd = 0.0;
    for (const auto* l : net.loads_at(b.id)) {
      pd += l->p_eff();
      qd += l->q_eff();
    }
    int type = b.kind == BusKind::PQ ? 1 : b.kind == BusKind::PV ? 2 : 3;
    out << "\t" << b.id << "\t" << type << "\t" << pd * base << "\t" << qd * base << "\t" << b.shunt_g * base
        << "\t" << b.shunt_b * base << "\t" << b.area << "\t" << b.vm_init << "\t" << b.va_init / kDegToRad << "\t"
        << b.base_kv << "\t1\t" << b.v_max << "\t" << b.v_min << ";\n";
  }
  out << "];\n\n";

  out << "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n";
  out << "mpc.gen = [\n";
  for (const auto& g : net.generators()) {
    out << "\t" << g.bus << "\t" << g.p_set * base << "\t" << g.q_set * base << "\t" << g.q_max * base << "\t"
        << g.q_min * base << "\t" << g.v_set << "\t" << base << "\t" << (g.status == Status::In ? 1 : 0) << "\t"
        << g.p_max * base << "\t" << g.p_min * base << ";\n";
  }
  out << "];\n\n";

  out << "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\n";
  out << "mpc.branch = [\n";
  for (const auto& br : net.branches()) {
    out << "\t" << br.from_bus << "\t" << br.to_bus << "\t" << br.series_r << "\t" << br.series_x << "\t"
        << br.charging_b << "\t" << (br.flow_limit ? *br.flow_limit * base : 0.0) << "\t0\t0\t" << br.tap_ratio
        << "\t" << br.phase_shift / kDegToRad << "\t" << (br.status == Status::In ? 1 : 0) << ";\n";
  }
  out << "];\n\n";

  out << "%\t2\tstartup\tshutdown\tn\tc2\tc1\tc0\n";
  out << "mpc.gencost = [\n";
  for (const auto& g : net.generators())
    out << "\t2\t0\t0\t3\t" << g.cost.c2 << "\t" << g.cost.c1 << "\t" << g.cost.c0 << ";\n";
  out << "];\n";
  return out.str();
}

}  // namespace gridstep
