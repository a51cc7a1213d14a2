// Copyright 2026 The ese-sim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ese/ese.hpp"

namespace fs = std::filesystem;
using namespace ese;

namespace {

enum ExitCode { kOk = 0, kIo = 2, kValidation = 3, kNumeric = 4 };

struct Globals {
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  std::string manifest;
};

void init_logging() {
  auto logger = spdlog::stderr_color_mt("ese");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("ESE_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
}

/// Records a stage in the pipeline manifest next to the first output, or in
/// the file given by --manifest.
class Stage {
 public:
  Stage(const Globals& g, std::string name, std::vector<fs::path> inputs)
      : g_(g), name_(std::move(name)), inputs_(std::move(inputs)) {}

  void begin(const fs::path& first_output) {
    path_ = g_.manifest.empty() ? first_output.parent_path() / "pipeline.json" : fs::path(g_.manifest);
    PipelineManifest(path_).check_inputs(inputs_);
  }

  void finish(const json& params, const std::vector<fs::path>& outputs) {
    PipelineManifest pm(path_);
    pm.record(name_, params, inputs_, outputs);
    spdlog::info("{}: recorded in {}", name_, path_.string());
  }

 private:
  const Globals& g_;
  std::string name_;
  std::vector<fs::path> inputs_;
  fs::path path_;
};

/// Files referenced by a container manifest, so a stage also hashes its blob.
std::vector<fs::path> with_blob(const fs::path& manifest) {
  std::vector<fs::path> out{manifest};
  fs::path blob = manifest;
  blob.replace_extension(".bin");
  if (fs::exists(blob)) out.push_back(blob);
  return out;
}

std::vector<fs::path> concat(std::vector<fs::path> a, const std::vector<fs::path>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text(out, text);
  }
}

std::vector<Vector> read_sequence_csv(const fs::path& p, std::size_t dim) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::vector<Vector> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    Vector v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double x = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw ValidationError(p.string() + ":" + std::to_string(lineno) + ": not a number");
      v.push_back(x);
    }
    if (v.size() != dim) {
      throw ShapeError(p.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) + " values, got " +
                       std::to_string(v.size()));
    }
    rows.push_back(std::move(v));
  }
  return rows;
}

void add_sim_options(CLI::App* cmd, SimConfig& c) {
  cmd->add_option("--channels", c.n_channels, "channels sharing the weights")->capture_default_str();
  cmd->add_option("--n-pe", c.n_pe, "PEs per channel")->capture_default_str();
  cmd->add_option("--fifo-depth", c.fifo_depth, "activation queue depth")->capture_default_str();
  cmd->add_option("--freq-pe", c.freq_pe, "PE clock in Hz")->capture_default_str();
  cmd->add_option("--freq-mem", c.freq_mem, "memory clock in Hz")->capture_default_str();
  cmd->add_option("--mem-width", c.mem_width_bits, "memory interface width in bits")->capture_default_str();
  cmd->add_option("--elemmul-units", c.elemmul_units, "elementwise lanes")->capture_default_str();
  cmd->add_option("--pipeline-latency", c.pipeline_latency, "elementwise pipeline depth")->capture_default_str();
  cmd->add_option("--buffer-words", c.spmat_buffer_words, "pointer buffer size in words")->capture_default_str();
  cmd->add_flag("--per-channel-refetch", c.per_channel_refetch, "every channel fetches its own weights");
  cmd->add_flag("--independent-push", c.independent_push, "fill each PE queue independently");
}

std::string fixed(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string render_report(const json& r) {
  std::ostringstream os;
  const auto& t = r.at("throughput");
  os << "total cycles        " << r.at("total_cycles").get<std::uint64_t>() << '\n'
     << "latency (us)        " << fixed(r.at("latency_s").get<double>() * 1e6, 3) << '\n'
     << "utilization         " << fixed(r.at("utilization").get<double>(), 4) << '\n'
     << "useful utilization  " << fixed(r.at("useful_utilization").get<double>(), 4) << '\n'
     << "dense ops (GOP)     " << fixed(t.at("dense_ops").get<double>() / 1e9, 4) << '\n'
     << "sparse ops (GOP)    " << fixed(t.at("sparse_ops").get<double>() / 1e9, 4) << '\n'
     << "real GOPS           " << fixed(t.at("sparse_gops").get<double>(), 1) << '\n'
     << "equivalent GOPS     " << fixed(t.at("equivalent_gops").get<double>(), 1) << "\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-6s %-6s %11s %9s %10s %10s %8s %6s\n", "layer", "matrix", "shape", "words",
                "compute", "fetch", "util", "bound");
  os << line;
  for (const auto& m : r.at("matrices")) {
    const std::string shape = std::to_string(m.at("rows").get<std::size_t>()) + "x" +
                              std::to_string(m.at("cols").get<std::size_t>());
    std::snprintf(line, sizeof line, "%-6zu %-6s %11s %9llu %10llu %10llu %8.4f %6s\n", m.at("layer").get<std::size_t>(),
                  m.at("name").get<std::string>().c_str(), shape.c_str(),
                  static_cast<unsigned long long>(m.at("words").get<std::uint64_t>()),
                  static_cast<unsigned long long>(m.at("compute_cycles").get<std::uint64_t>()),
                  static_cast<unsigned long long>(m.at("fetch_cycles").get<std::uint64_t>()),
                  m.at("utilization").get<double>(), m.at("fetch_bound").get<bool>() ? "fetch" : "pe");
    os << line;
  }
  return os.str();
}

std::string report_csv(const json& r) {
  std::ostringstream os;
  os.precision(17);
  os << "layer,matrix,rows,cols,words,real_nnz,compute_cycles,compute_lower_bound,fetch_cycles,utilization,"
        "useful_utilization,fetch_bound\n";
  for (const auto& m : r.at("matrices")) {
    os << m.at("layer").get<std::size_t>() << ',' << m.at("name").get<std::string>() << ','
       << m.at("rows").get<std::size_t>() << ',' << m.at("cols").get<std::size_t>() << ','
       << m.at("words").get<std::uint64_t>() << ',' << m.at("real_nnz").get<std::uint64_t>() << ','
       << m.at("compute_cycles").get<std::uint64_t>() << ',' << m.at("compute_lower_bound").get<std::uint64_t>() << ','
       << m.at("fetch_cycles").get<std::uint64_t>() << ',' << m.at("utilization").get<double>() << ','
       << m.at("useful_utilization").get<double>() << ',' << (m.at("fetch_bound").get<bool>() ? 1 : 0) << '\n';
  }
  return os.str();
}

int classify(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return kIo;
  if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
  return kValidation;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Sparse LSTM compression toolchain and accelerator simulator"};
  app.set_version_flag("--version", ESE_VERSION);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "seed for every random choice")->capture_default_str();
  app.add_option("--jobs", g.jobs, "threads for independent sweep points")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--manifest", g.manifest, "pipeline manifest (default: pipeline.json beside the output)");

  // gen
  auto* gen = app.add_subcommand("gen", "generate a seeded synthetic model");
  std::string gen_out;
  LayerConfig gen_cfg = reference_config();
  std::size_t gen_layers = 1;
  bool gen_plain = false, gen_zero = false;
  gen->add_option("-o,--out", gen_out, "model manifest")->required();
  gen->add_option("--input-dim", gen_cfg.input_dim)->capture_default_str();
  gen->add_option("--hidden", gen_cfg.hidden_dim)->capture_default_str();
  gen->add_option("--proj", gen_cfg.proj_dim)->capture_default_str();
  gen->add_option("--layers", gen_layers)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_flag("--no-peephole", [&](std::int64_t) { gen_cfg.has_peephole = false; });
  gen->add_flag("--no-projection", [&](std::int64_t) { gen_cfg.has_projection = false; });
  gen->add_flag("--plain", gen_plain, "keep Gaussian weights instead of stretching to the reference ranges");
  gen->add_flag("--zero", gen_zero, "all-zero weights");

  // prune
  auto* prune = app.add_subcommand("prune", "prune a model to a target density");
  std::string pr_model, pr_out, pr_mask;
  double pr_density = 0.1;
  std::size_t pr_pe = 32;
  bool pr_unbalanced = false, pr_per_row = false;
  int pr_iter = 0;
  prune->add_option("-m,--model", pr_model)->required();
  prune->add_option("-o,--out", pr_out, "pruned model manifest")->required();
  prune->add_option("--mask", pr_mask, "mask manifest")->required();
  prune->add_option("--density", pr_density)->capture_default_str();
  prune->add_option("--n-pe", pr_pe)->capture_default_str();
  prune->add_option("--iteration", pr_iter, "prune/retrain round counter")->capture_default_str();
  prune->add_flag("--balanced,!--unbalanced", [&](std::int64_t n) { pr_unbalanced = n < 0; },
                  "equal quota per PE (default) or plain magnitude pruning");
  prune->add_flag("--per-row", pr_per_row, "equal quota per row instead of per PE");

  // quantize
  auto* quant = app.add_subcommand("quantize", "choose formats and quantize a model");
  std::string q_model, q_out;
  int q_width = 12;
  quant->add_option("-m,--model", q_model)->required();
  quant->add_option("-o,--out", q_out)->required();
  quant->add_option("--width", q_width)->capture_default_str();

  // encode
  auto* enc = app.add_subcommand("encode", "encode quantized matrices as interleaved CSC");
  std::string e_in, e_mask, e_out, e_dump;
  std::size_t e_pe = 32;
  enc->add_option("-q,--quantized", e_in)->required();
  enc->add_option("--mask", e_mask, "mask manifest (default: keep non-zero codes)");
  enc->add_option("-o,--out", e_out)->required();
  enc->add_option("--n-pe", e_pe)->capture_default_str();
  enc->add_option("--dump", e_dump, "write a text dump of every matrix");

  // schedule
  auto* sch = app.add_subcommand("schedule", "emit the operation schedule of a layer");
  std::string s_model, s_out, s_format = "json";
  LayerConfig s_cfg = reference_config();
  sch->add_option("-m,--model", s_model, "take the layer shape from a model manifest");
  sch->add_option("--input-dim", s_cfg.input_dim)->capture_default_str();
  sch->add_option("--hidden", s_cfg.hidden_dim)->capture_default_str();
  sch->add_option("--proj", s_cfg.proj_dim)->capture_default_str();
  sch->add_flag("--no-peephole", [&](std::int64_t) { s_cfg.has_peephole = false; });
  sch->add_flag("--no-projection", [&](std::int64_t) { s_cfg.has_projection = false; });
  sch->add_option("--format", s_format)->check(CLI::IsMember({"json", "dot"}))->capture_default_str();
  sch->add_option("-o,--out", s_out, "output file (default stdout)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate an encoded model on the accelerator");
  std::string sim_in, sim_sched, sim_out, sim_timeline;
  SimConfig sim_cfg;
  sim->add_option("-e,--encoded", sim_in)->required();
  sim->add_option("--schedule", sim_sched, "schedule JSON (default: built from the model)");
  sim->add_option("-o,--out", sim_out, "report JSON")->required();
  sim->add_option("--timeline", sim_timeline, "per-phase timeline CSV");
  add_sim_options(sim, sim_cfg);

  // run
  auto* run = app.add_subcommand("run", "run the fixed-point datapath over an input sequence");
  std::string r_in, r_inputs, r_out;
  bool r_sigmoid_g = false, r_float = false;
  run->add_option("-q,--quantized", r_in)->required();
  run->add_option("-i,--inputs", r_inputs, "CSV, one time step per line")->required();
  run->add_option("-o,--out", r_out, "output CSV (default stdout)");
  run->add_flag("--sigmoid-cell-input", r_sigmoid_g, "use sigmoid for the cell input");
  run->add_flag("--raw", r_float, "print raw integer codes instead of real values");

  // report
  auto* rep = app.add_subcommand("report", "render a simulation report");
  std::string rp_in, rp_csv;
  rep->add_option("report", rp_in)->required();
  rep->add_option("--csv", rp_csv, "per-matrix CSV");

  // lut
  auto* lut = app.add_subcommand("lut", "dump an activation lookup table");
  std::string l_fn = "sigmoid", l_out;
  std::size_t l_points = kLutPoints;
  double l_min = 0, l_max = 0;
  lut->add_option("--fn", l_fn)->check(CLI::IsMember({"sigmoid", "tanh"}))->capture_default_str();
  lut->add_option("--points", l_points)->capture_default_str();
  lut->add_option("--min", l_min, "window start (default per function)");
  lut->add_option("--max", l_max, "window end (default per function)");
  lut->add_option("-o,--out", l_out, "CSV (default stdout)");

  // sweep-fifo
  auto* sf = app.add_subcommand("sweep-fifo", "PE utilization against FIFO depth");
  std::string sf_in, sf_out;
  std::vector<std::size_t> sf_depths = {1, 2, 4, 8, 16, 32};
  bool sf_indep = false;
  sf->add_option("-e,--encoded", sf_in)->required();
  sf->add_option("--depths", sf_depths)->delimiter(',')->capture_default_str();
  sf->add_flag("--independent-push", sf_indep);
  sf->add_option("-o,--out", sf_out, "CSV (default stdout)");

  // sweep-density
  auto* sd = app.add_subcommand("sweep-density", "speedup against density, balanced and unbalanced");
  std::string sd_in, sd_out;
  std::vector<double> sd_dens = {0.5, 0.4, 0.3, 0.2, 0.1, 0.05};
  int sd_width = 12;
  SimConfig sd_cfg;
  sd->add_option("-m,--model", sd_in)->required();
  sd->add_option("--densities", sd_dens)->delimiter(',')->capture_default_str();
  sd->add_option("--width", sd_width)->capture_default_str();
  sd->add_option("-o,--out", sd_out, "CSV (default stdout)");
  add_sim_options(sd, sd_cfg);

  // pe-bound
  auto* pb = app.add_subcommand("pe-bound", "largest PE count the memory bandwidth can feed");
  SimConfig pb_cfg;
  pb->add_option("--mem-width", pb_cfg.mem_width_bits)->capture_default_str();
  pb->add_option("--freq-pe", pb_cfg.freq_pe)->capture_default_str();
  pb->add_option("--freq-mem", pb_cfg.freq_mem)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (*gen) {
      gen_cfg.validate();
      Stage st(g, "gen", {});
      st.begin(gen_out);
      Model model;
      LayerConfig c = gen_cfg;
      for (std::size_t l = 0; l < gen_layers; ++l) {
        const auto& ranges = l == 0 ? reference_ranges_layer1() : reference_ranges_layer2();
        model.push_back(gen_zero ? LstmParams::zeros(c) : synthetic_layer(c, g.seed + l, gen_plain ? nullptr : &ranges));
        c.input_dim = c.has_projection ? c.proj_dim : c.hidden_dim;
      }
      save_model(model, gen_out);
      st.finish({{"seed", g.seed}, {"layers", gen_layers}, {"config", config_to_json(gen_cfg)}, {"plain", gen_plain},
                 {"zero", gen_zero}},
                with_blob(gen_out));
    } else if (*prune) {
      Stage st(g, "prune", with_blob(pr_model));
      st.begin(pr_out);
      const Model model = load_model(pr_model);
      const auto mode = pr_per_row ? QuotaMode::kPerRow : QuotaMode::kPerPe;
      const auto mask = pr_unbalanced ? prune_model_magnitude(model, pr_density, pr_pe, pr_iter)
                                      : prune_model(model, pr_density, pr_pe, mode, pr_iter);
      save_model(apply_model_mask(model, mask), pr_out);
      save_mask(mask, pr_mask);
      for (std::size_t l = 0; l < mask.layers.size(); ++l) {
        for (const auto& [name, m] : mask.layers[l]) {
          const auto s = load_stats(m, PePartition{std::min(pr_pe, m.rows)});
          spdlog::info("layer {} {}: imbalance {:.4f}", l, name, s.imbalance);
        }
      }
      st.finish({{"density", pr_density}, {"n_pe", pr_pe}, {"balanced", !pr_unbalanced}, {"mode", to_string(mode)},
                 {"iteration", pr_iter}},
                concat(with_blob(pr_out), with_blob(pr_mask)));
    } else if (*quant) {
      Stage st(g, "quantize", with_blob(q_model));
      st.begin(q_out);
      const Model model = load_model(q_model);
      std::vector<QuantizedLayer> layers;
      for (const auto& p : model) layers.push_back(quantize_layer(p, make_plan(p, q_width)));
      save_quantized(layers, q_out);
      st.finish({{"width", q_width}}, with_blob(q_out));
    } else if (*enc) {
      std::vector<fs::path> ins = with_blob(e_in);
      if (!e_mask.empty()) ins = concat(ins, with_blob(e_mask));
      Stage st(g, "encode", ins);
      st.begin(e_out);
      const auto layers = load_quantized(e_in);
      std::optional<ModelMask> mask;
      if (!e_mask.empty()) mask = load_mask(e_mask);
      const auto encoded = encode_model(layers, mask ? &*mask : nullptr, e_pe);
      save_encoded(encoded, e_out);
      std::vector<fs::path> outs = with_blob(e_out);
      if (!e_dump.empty()) {
        std::ostringstream os;
        for (std::size_t l = 0; l < encoded.size(); ++l) {
          for (const auto& [name, m] : encoded[l].matrices) os << "# layer " << l << ' ' << name << '\n' << dump_csc(m);
        }
        write_text(e_dump, os.str());
        outs.push_back(e_dump);
      }
      st.finish({{"n_pe", e_pe}, {"mask", !e_mask.empty()}}, outs);
    } else if (*sch) {
      LayerConfig cfg = s_cfg;
      if (!s_model.empty()) {
        const json man = read_json(s_model);
        if (!man.contains("layers") || man["layers"].empty()) throw ValidationError(s_model + " has no layers");
        cfg = config_from_json(man["layers"][0].at("config"));
      }
      cfg.validate();
      const Schedule s = build_schedule(cfg);
      emit(s_out, s_format == "dot" ? schedule_to_dot(s) : schedule_to_json(s).dump(2) + "\n");
    } else if (*sim) {
      std::vector<fs::path> ins = with_blob(sim_in);
      if (!sim_sched.empty()) ins.push_back(sim_sched);
      Stage st(g, "simulate", ins);
      st.begin(sim_out);
      const auto encoded = load_encoded(sim_in);
      if (encoded.empty()) throw ValidationError(sim_in + " has no layers");
      const Schedule s = sim_sched.empty() ? build_schedule(encoded.front().config)
                                           : schedule_from_json(read_json(sim_sched));
      for (const auto& v : validate_schedule(s)) spdlog::error("schedule: {}", v.message);
      const auto report = simulate_lstm(encoded, s, sim_cfg);
      write_json(sim_out, sim_report_to_json(report));
      std::vector<fs::path> outs{sim_out};
      if (!sim_timeline.empty()) {
        write_text(sim_timeline, timeline_csv(report));
        outs.push_back(sim_timeline);
      }
      st.finish({{"config", sim_config_to_json(sim_cfg)}}, outs);
    } else if (*run) {
      const auto layers = load_quantized(r_in);
      if (layers.empty()) throw ValidationError(r_in + " has no layers");
      const auto xs = read_sequence_csv(r_inputs, layers.front().config.input_dim);
      const ActLuts luts;
      const auto acts = r_sigmoid_g ? ActivationChoice::kSigmoidCellInput : ActivationChoice::kTanhCellInput;
      std::vector<QLstmState> states;
      for (const auto& q : layers) states.push_back(QLstmState::zeros(q.config));
      std::ostringstream os;
      os.precision(17);
      for (const auto& x : xs) {
        QVector v = quantize_input(x);
        for (std::size_t l = 0; l < layers.size(); ++l) v = quantized_lstm_step(layers[l], luts, v, states[l], acts);
        for (std::size_t k = 0; k < v.size(); ++k) {
          if (k) os << ',';
          if (r_float) {
            os << v[k];
          } else {
            os << std::ldexp(static_cast<double>(v[k]), -kInputFormat.frac_bits);
          }
        }
        os << '\n';
      }
      emit(r_out, os.str());
    } else if (*rep) {
      const json r = read_json(rp_in);
      if (r.value("format", "") != "ese-sim-report") throw ValidationError(rp_in + " is not a simulation report");
      try {
        std::cout << render_report(r);
        if (!rp_csv.empty()) write_text(rp_csv, report_csv(r));
      } catch (const json::exception& e) {
        throw ValidationError(rp_in + ": " + e.what());
      }
    } else if (*lut) {
      const ActFn fn = act_fn_from_string(l_fn);
      auto [lo, hi] = default_lut_range(fn);
      if (lut->count("--min")) lo = l_min;
      if (lut->count("--max")) hi = l_max;
      emit(l_out, lut_to_csv(build_lut(fn, lo, hi, l_points)));
    } else if (*sf) {
      emit(sf_out, fifo_sweep_csv(fifo_sweep(load_encoded(sf_in), sf_depths, sf_indep)));
    } else if (*sd) {
      const Model model = load_model(sd_in);
      emit(sd_out, sparsity_sweep_csv(sparsity_sweep(model, sd_dens, sd_cfg, sd_width, g.jobs)));
    } else if (*pb) {
      std::cout << pe_balance_bound(pb_cfg) << '\n';
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return classify(e);
  } catch (const json::exception& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kIo;
  }
  return kOk;
}
