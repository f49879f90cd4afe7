// contactcurv: command-line front end.
//
// Every command writes one JSON document (or CSV with --format csv) to --out,
// or to stdout when --out is absent, and a one-line summary to stderr.
// Exit codes: 0 success, 1 mathematical failure, 2 configuration error,
// 3 integration failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "contactcurv/asymptotics.hpp"
#include "contactcurv/canonical.hpp"
#include "contactcurv/comparison.hpp"
#include "contactcurv/flow.hpp"
#include "contactcurv/model.hpp"
#include "contactcurv/structure.hpp"
#include "json.hpp"

using namespace contactcurv;
using nlohmann::json;

namespace {

struct RunConfig {
  std::string model = "heisenberg";
  std::string model_file;
  int d = 1;
  std::vector<double> generic;  // generic3d parameters
  std::string h;
  double t = 0.0;
  double tmax = 10.0;
  double tol = 1e-10;
  double validate_tol = -1.0;  // model default
  std::string format = "json";
  std::string out;
  int samples = 0;
  std::string method = "ric_c";
  bool no_normalize = false;
};

ModelPtr load_model(const RunConfig& c, bool validated = true) {
  if (!c.model_file.empty())
    return validated ? ModelPtr(load_model_file(c.model_file)) : ModelPtr(read_model_file(c.model_file));
  Generic3dParams p;
  if (!c.generic.empty()) {
    if (c.generic.size() != 6) throw ConfigError("--generic takes c12_1,c12_2,c10_1,c10_2,c20_1,c20_2");
    p = {c.generic[0], c.generic[1], c.generic[2], c.generic[3], c.generic[4], c.generic[5]};
  }
  return builtin_model(c.model, c.d, p);
}

FlowOptions flow_options(const RunConfig& c) {
  if (!(c.tol > 0.0)) throw ConfigError("--tol must be positive");
  FlowOptions o;
  o.rtol = o.atol = c.tol;
  return o;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse '" + item + "' as a number");
    }
  }
  return v;
}

ExtremalState initial_state(const RunConfig& c, const ModelPtr& m, bool unit_speed) {
  if (c.h.empty()) throw ConfigError("--h is required");
  auto v = parse_list(c.h);
  if (v.empty() || int(v.size()) > m->dim())
    throw ConfigError("--h takes 1 to " + std::to_string(m->dim()) + " components h0..h" + std::to_string(m->dim() - 1) +
                      ", got " + std::to_string(v.size()));
  // Trailing components may be omitted and count as zero.
  v.resize(size_t(m->dim()), 0.0);
  ExtremalState s{m->origin(), Eigen::Map<const Vec>(v.data(), Eigen::Index(v.size()))};
  if (!(hamiltonian(s) > 0.0)) throw TrivialCovector("the horizontal part of --h vanishes");
  const double speed = std::sqrt(2.0 * hamiltonian(s));
  if (std::abs(speed - 1.0) > 1e-12) {
    if (c.no_normalize) {
      if (unit_speed) throw ConfigError("this command needs a unit-speed covector (2H = 1); drop --no-normalize");
    } else {
      s = normalize_unit_speed(s);
      std::cerr << "note: covector rescaled to unit speed, h = [";
      for (Eigen::Index i = 0; i < s.h.size(); ++i) std::cerr << (i ? ", " : "") << s.h(i);
      std::cerr << "]\n";
    }
  }
  return s;
}

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json model_json(const ModelPtr& m) {
  return {{"name", m->name()}, {"d", m->d()}, {"left_invariant", m->left_invariant()}};
}

json envelope(const std::string& command, const ModelPtr& m) {
  json j = {{"schema", 1}, {"command", command}};
  if (m) j["model"] = model_json(m);
  return j;
}

// Writes the whole document in one go so that failures never leave partial output.
void emit(const RunConfig& c, const std::string& text) {
  if (c.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(c.out);
  if (!f) throw ConfigError("cannot write " + c.out);
  f << text;
}

void emit_json(const RunConfig& c, const json& j) { emit(c, j.dump(2) + "\n"); }

void check_format(const RunConfig& c) {
  if (c.format != "json" && c.format != "csv") throw ConfigError("--format must be json or csv");
}

// ---------------------------------------------------------------------------

int cmd_models(const RunConfig& c) {
  json list = json::array();
  std::ostringstream csv;
  csv << "name,d,left_invariant,k_type,cr,sasakian,yang_mills\n";
  for (const auto& name : builtin_model_names()) {
    for (int d = 1; d <= (name == "generic3d" ? 1 : 3); ++d) {
      const ModelPtr m = builtin_model(name, d);
      const StructureFlags f = tanno_tensors(*m, m->origin()).flags;
      list.push_back({{"name", name + "(" + std::to_string(d) + ")"},
                      {"d", d},
                      {"left_invariant", m->left_invariant()},
                      {"k_type", f.is_K_type},
                      {"cr", f.is_CR},
                      {"sasakian", f.is_sasakian},
                      {"yang_mills", f.is_yang_mills}});
      csv << name << "(" << d << ")," << d << ',' << m->left_invariant() << ',' << f.is_K_type << ',' << f.is_CR << ','
          << f.is_sasakian << ',' << f.is_yang_mills << '\n';
    }
  }
  if (c.format == "csv") emit(c, csv.str());
  else emit_json(c, {{"schema", 1}, {"command", "models"}, {"models", list}});
  std::cerr << list.size() << " builtin models\n";
  return kExitOk;
}

int cmd_validate(const RunConfig& c) {
  const ModelPtr m = load_model(c, false);
  const ValidationReport r = validate(*m, {}, c.validate_tol);
  json j = envelope("validate", m);
  j["validation"] = r.to_json();
  if (r.ok()) {
    const StructureFlags f = tanno_tensors(*m, m->origin()).flags;
    j["flags"] = {{"k_type", f.is_K_type}, {"cr", f.is_CR}, {"sasakian", f.is_sasakian}, {"yang_mills", f.is_yang_mills}};
  }
  emit_json(c, j);
  std::cerr << m->name() << ": " << (r.ok() ? "valid" : "invalid") << '\n';
  return r.ok() ? kExitOk : kExitMath;
}

int cmd_geodesic(const RunConfig& c) {
  const ModelPtr m = load_model(c);
  const ExtremalState s = initial_state(c, m, false);
  if (!(c.tmax > 0.0)) throw ConfigError("--tmax must be positive");
  const GeodesicRecord g = flow(m, s, c.tmax, flow_options(c));
  if (c.format == "csv") {
    std::ostringstream os;
    write_trajectory_csv(os, g, c.samples);
    emit(c, os.str());
  } else {
    const ExtremalState e = g.at(c.tmax);
    json j = envelope("geodesic", m);
    j["T"] = c.tmax;
    j["initial"] = {{"x", vec_json(m->output_coords(s.x))}, {"h", vec_json(s.h)}};
    j["final"] = {{"x", vec_json(m->output_coords(e.x))}, {"h", vec_json(e.h)}};
    j["energy_drift"] = g.max_energy_drift();
    j["steps"] = {{"accepted", g.stats().accepted}, {"rejected", g.stats().rejected}};
    emit_json(c, j);
  }
  std::cerr << "geodesic to T = " << c.tmax << ", energy drift " << g.max_energy_drift() << '\n';
  return kExitOk;
}

int cmd_curvature(const RunConfig& c) {
  const ModelPtr m = load_model(c);
  const ExtremalState s = initial_state(c, m, true);
  std::vector<double> times;
  if (c.samples > 1) {
    for (int k = 0; k < c.samples; ++k) times.push_back(c.tmax * k / (c.samples - 1));
  } else {
    times.push_back(c.t);
  }
  const double T = std::max(*std::max_element(times.begin(), times.end()), 1e-3);
  const MovingFrame mf = parallel_frame(m, s, T, flow_options(c));
  std::vector<CurvatureBlocks> blocks;
  for (double t : times) blocks.push_back(curvature_blocks(mf, t));
  if (c.format == "csv") {
    std::ostringstream os;
    os.precision(17);
    os << "t,Raa,Rbb,ric_a,ric_b,ric_c,aa_ac_mode\n";
    for (const auto& b : blocks)
      os << b.t << ',' << b.Raa << ',' << b.Rbb << ',' << b.ricci_a << ',' << b.ricci_b << ',' << b.ricci_c << ','
         << b.aa_ac_mode << '\n';
    emit(c, os.str());
  } else {
    json j = envelope("curvature", m);
    j["h"] = vec_json(s.h);
    json arr = json::array();
    for (const auto& b : blocks) arr.push_back(b.to_json());
    j["blocks"] = arr;
    emit_json(c, j);
  }
  std::cerr << "curvature at " << times.size() << " time(s); Ric^b(" << blocks[0].t << ") = " << blocks[0].ricci_b
            << '\n';
  return kExitOk;
}

int cmd_qexpand(const RunConfig& c) {
  const ModelPtr m = load_model(c);
  const ExtremalState s = initial_state(c, m, true);
  ExpansionOptions o;
  o.flow = flow_options(c);
  const GeodesicExpansion e = expansion_along_geodesic(m, s, o);
  if (c.format == "csv") {
    std::ostringstream os;
    os.precision(17);
    os << "operator,row,col,value\n";
    const std::pair<const char*, const Mat*> ops[] = {
        {"I", &e.series.I}, {"Q0", &e.series.Q0}, {"Q1", &e.series.Q1}, {"Q2", &e.series.Q2}};
    for (const auto& [name, M] : ops)
      for (Eigen::Index i = 0; i < M->rows(); ++i)
        for (Eigen::Index k = 0; k < M->cols(); ++k) os << name << ',' << i << ',' << k << ',' << (*M)(i, k) << '\n';
    emit(c, os.str());
  } else {
    json j = envelope("qexpand", m);
    j["h"] = vec_json(s.h);
    j.update(e.series.to_json());
    j["closed"] = e.closed.to_json();
    emit_json(c, j);
  }
  std::cerr << "Q expansion, series vs closed max deviation " << e.series.series_vs_closed_max_dev << '\n';
  return kExitOk;
}

int cmd_conjugate(const RunConfig& c) {
  const ModelPtr m = load_model(c);
  const ExtremalState s = initial_state(c, m, true);
  if (!(c.tmax > 0.0)) throw ConfigError("--tmax must be positive");
  const auto t = first_conjugate_time(m, s, c.tmax, 1e-2, flow_options(c));
  if (!t) throw NoConjugateTime("none found in (0, " + std::to_string(c.tmax) + "]");
  if (c.format == "csv") {
    std::ostringstream os;
    os.precision(17);
    os << "t_star\n" << *t << '\n';
    emit(c, os.str());
  } else {
    json j = envelope("conjugate", m);
    j["h"] = vec_json(s.h);
    j["tmax"] = c.tmax;
    j["t_star"] = *t;
    emit_json(c, j);
  }
  std::cerr << "first conjugate time " << *t << '\n';
  return kExitOk;
}

int cmd_bounds(const RunConfig& c) {
  const ModelPtr m = load_model(c);
  SamplingOptions o;
  if (c.samples > 0) o.directions = c.samples;
  BMReport r;
  if (c.method == "ric_c") r = evaluate_ric_c(m, o);
  else if (c.method == "ric_ab") r = evaluate_ric_ab(m, o);
  else if (c.method == "tensor") r = evaluate_tensor(m, o);
  else throw ConfigError("--method must be ric_c, ric_ab or tensor");
  if (c.format == "csv") {
    std::ostringstream os;
    r.write_csv(os);
    emit(c, os.str());
  } else {
    json j = envelope("bounds", m);
    j.update(r.to_json());
    emit_json(c, j);
  }
  if (r.pass) std::cerr << r.theorem << ": diameter bound " << *r.diameter_bound << '\n';
  else std::cerr << r.theorem << ": hypotheses fail (" << r.reason << ")\n";
  return r.pass ? kExitOk : kExitMath;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Canonical curvature, geodesic cost expansion and comparison bounds for contact sub-Riemannian models"};
  app.require_subcommand(1);
  // --h is the covector, so help is long-form only.
  app.set_help_flag("--help", "print this help and exit");
  RunConfig c;

  auto add_model = [&c](CLI::App* s) {
    s->add_option("--model", c.model, "builtin model: heisenberg, hopf_sphere, generic3d");
    s->add_option("--model-file", c.model_file, "JSON model file (left-invariant)");
    s->add_option("--d", c.d, "half dimension of the distribution")->check(CLI::PositiveNumber);
    s->add_option("--generic", c.generic, "generic3d parameters c12_1,c12_2,c10_1,c10_2,c20_1,c20_2")->delimiter(',');
    s->add_option("--format", c.format, "json or csv");
    s->add_option("--out", c.out, "output file (default stdout)");
  };
  auto add_covector = [&c](CLI::App* s) {
    s->add_option("--h", c.h, "covector components h0,...,h2d");
    s->add_option("--tol", c.tol, "integrator tolerance");
    s->add_flag("--no-normalize", c.no_normalize, "do not rescale the covector to unit speed");
  };

  CLI::App* models = app.add_subcommand("models", "list builtin models and their structure flags");
  models->add_option("--format", c.format, "json or csv");
  models->add_option("--out", c.out, "output file (default stdout)");

  CLI::App* validate_cmd = app.add_subcommand("validate", "check the structural constants of a model");
  add_model(validate_cmd);
  validate_cmd->add_option("--tol", c.validate_tol, "residual tolerance (default: model tolerance)");

  CLI::App* geodesic = app.add_subcommand("geodesic", "integrate a normal extremal");
  add_model(geodesic);
  add_covector(geodesic);
  geodesic->add_option("--tmax", c.tmax, "final time");
  geodesic->add_option("--samples", c.samples, "equispaced CSV rows (default: integrator nodes)");

  CLI::App* curvature = app.add_subcommand("curvature", "canonical curvature blocks along a geodesic");
  add_model(curvature);
  add_covector(curvature);
  curvature->add_option("--t", c.t, "time along the geodesic");
  curvature->add_option("--tmax", c.tmax, "sampling window with --samples");
  curvature->add_option("--samples", c.samples, "equispaced times in [0, tmax]");

  CLI::App* qexpand = app.add_subcommand("qexpand", "small-time expansion of the geodesic cost");
  add_model(qexpand);
  add_covector(qexpand);

  CLI::App* conjugate = app.add_subcommand("conjugate", "first conjugate time");
  add_model(conjugate);
  add_covector(conjugate);
  conjugate->add_option("--tmax", c.tmax, "search horizon");

  CLI::App* bounds = app.add_subcommand("bounds", "Bonnet-Myers diameter bounds from sampled curvature");
  add_model(bounds);
  bounds->add_option("--method", c.method, "ric_c, ric_ab or tensor");
  bounds->add_option("--samples", c.samples, "horizontal directions per h0 level");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    check_format(c);
    if (*models) return cmd_models(c);
    if (*validate_cmd) return cmd_validate(c);
    if (*geodesic) return cmd_geodesic(c);
    if (*curvature) return cmd_curvature(c);
    if (*qexpand) return cmd_qexpand(c);
    if (*conjugate) return cmd_conjugate(c);
    if (*bounds) return cmd_bounds(c);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}
