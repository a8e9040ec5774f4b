#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wbcast/checker.hpp"
#include "wbcast/config.hpp"
#include "wbcast/scenarios.hpp"
#include "wbcast/simnet.hpp"
#include "wbcast/trace.hpp"
#include "wbcast/transport.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void spill(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

wbcast::Trace load_trace(const std::string& path) {
  return wbcast::Trace::from_jsonl(slurp(path));
}

std::vector<wbcast::GroupId> parse_dest(const std::string& s) {
  std::vector<wbcast::GroupId> dest;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty() && (tok[0] == 'g' || tok[0] == 'G')) tok.erase(0, 1);
    if (tok.empty()) throw std::runtime_error("empty destination group in '" + s + "'");
    dest.push_back(static_cast<wbcast::GroupId>(std::stoul(tok)));
  }
  if (dest.empty()) throw std::runtime_error("no destination groups in '" + s + "'");
  return dest;
}

int cmd_sim(const std::string& config_path, const std::string& trace_out, bool snapshots) {
  auto cfg = wbcast::SimConfig::from_json(wbcast::json::parse(slurp(config_path)));
  if (snapshots) cfg.snapshots = true;
  wbcast::Trace trace = wbcast::run_simulation(cfg);
  spill(trace_out, trace.to_jsonl());
  std::size_t deliveries = 0;
  for (const auto& e : trace.events) {
    if (e.kind == wbcast::EventKind::deliver) ++deliveries;
  }
  std::cout << "simulated " << trace.events.size() << " events, " << deliveries
            << " deliveries -> " << trace_out << "\n";
  return 0;
}

int cmd_check(const std::string& trace_path, const std::string& config_path,
              const std::string& report_out) {
  wbcast::Trace trace = load_trace(trace_path);
  if (!config_path.empty()) trace.config = wbcast::json::parse(slurp(config_path));
  wbcast::CheckReport rep;
  if (trace.config.is_object() && trace.config.value("transport", false)) {
    // Socket-run traces: wall-clock timing carries no delta bound, so the
    // latency-independent verdicts apply (safety, genuineness).
    rep.merge(wbcast::check_safety(trace));
    rep.merge(wbcast::check_genuineness(trace));
  } else {
    rep = wbcast::check_trace(trace);
  }
  spill(report_out, rep.to_json().dump(2) + "\n");
  std::cout << rep.table();
  if (!rep.pass) {
    for (const auto& issue : rep.issues) {
      std::cout << "counterexample [" << issue.check << "] " << issue.detail << "\n";
    }
  }
  return rep.pass ? 0 : 1;
}

int cmd_latency(const std::string& trace_path, const std::string& delta) {
  wbcast::Trace trace = load_trace(trace_path);
  if (trace.config.is_object() && trace.config.value("transport", false)) {
    std::cerr << "latency metrics are defined against the simulator's delta; "
                 "socket-run traces are not eligible\n";
    return 1;
  }
  if (!delta.empty()) trace.config["delta"] = delta;
  wbcast::LatencyReport rep = wbcast::measure_latency(trace);
  std::cout << rep.table();
  return 0;
}

int cmd_node(const std::string& spec_path, wbcast::ProcessId id, std::string trace_out) {
  auto spec = wbcast::ClusterSpec::from_json(wbcast::json::parse(slurp(spec_path)));
  if (trace_out.empty()) trace_out = "wbcast-node-" + std::to_string(id) + ".jsonl";
  std::signal(SIGTERM, on_signal);
  std::signal(SIGINT, on_signal);
  std::signal(SIGPIPE, SIG_IGN);
  return wbcast::run_node(spec, id, trace_out, &g_stop);
}

int cmd_client(const std::string& spec_path, const std::string& dest, int count,
               wbcast::ProcessId id, int timeout_ms, std::string trace_out) {
  auto spec = wbcast::ClusterSpec::from_json(wbcast::json::parse(slurp(spec_path)));
  wbcast::ClientOptions opt;
  opt.id = id;
  opt.dest = parse_dest(dest);
  opt.count = count;
  opt.timeout_ms = timeout_ms;
  if (trace_out.empty()) trace_out = "wbcast-client-" + std::to_string(id) + ".jsonl";
  std::signal(SIGTERM, on_signal);
  std::signal(SIGINT, on_signal);
  std::signal(SIGPIPE, SIG_IGN);
  return wbcast::run_client(spec, opt, trace_out, &g_stop);
}

int cmd_scenario(const std::string& name, const std::string& protocol) {
  wbcast::ScenarioOutcome out =
      wbcast::run_scenario(name, wbcast::protocol_kind_from_string(protocol));
  for (const auto& note : out.notes) std::cout << note << "\n";
  if (!out.ok) {
    for (const auto& err : out.errors) std::cout << "FAIL " << err << "\n";
    return 1;
  }
  std::cout << "scenario " << name << ": ok\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"atomic multicast toolkit: simulator, trace checker, socket runner"};
  app.require_subcommand(1);

  std::string config_path, trace_path, trace_out, report_out, spec_path;
  std::string delta, dest, scenario_name, protocol = "whitebox";
  bool snapshots = false;
  wbcast::ProcessId node_id = 0;
  wbcast::ProcessId client_id = 1000;
  int count = 1, timeout_ms = 30000;

  auto* sim = app.add_subcommand("sim", "run one simulated schedule and write its trace");
  sim->add_option("--config", config_path, "simulator config (JSON)")->required();
  sim->add_option("--trace", trace_out, "output trace path (JSON lines)")->required();
  sim->add_flag("--snapshots", snapshots, "embed per-event state snapshots");

  auto* check = app.add_subcommand("check", "run the safety checks over a trace");
  check->add_option("--trace", trace_path, "trace to check")->required();
  check->add_option("--config", config_path, "override the trace's embedded config");
  check->add_option("--report", report_out, "verdict report output (JSON)")->required();

  auto* latency = app.add_subcommand("latency", "latency metrics of a simulator trace");
  latency->add_option("--trace", trace_path, "trace to measure")->required();
  latency->add_option("--delta", delta, "delay bound the metrics are stated in");

  auto* node = app.add_subcommand("node", "run one protocol process over TCP");
  node->add_option("--spec", spec_path, "cluster spec (JSON)")->required();
  node->add_option("--id", node_id, "this process's id (must appear in the spec)")->required();
  node->add_option("--trace", trace_out, "trace output path (default wbcast-node-<id>.jsonl)");

  auto* client = app.add_subcommand("client", "multicast messages into a socket cluster");
  client->add_option("--spec", spec_path, "cluster spec (JSON)")->required();
  client->add_option("--dest", dest, "destination groups, e.g. g0,g1")->required();
  client->add_option("--count", count, "messages to multicast")->required();
  client->add_option("--id", client_id, "client process id (default 1000)");
  client->add_option("--timeout-ms", timeout_ms, "acknowledgement deadline");
  client->add_option("--trace", trace_out, "trace output path (default wbcast-client-<id>.jsonl)");

  auto* scenario = app.add_subcommand("scenario", "run a named built-in scenario and check it");
  scenario->add_option("name", scenario_name, "solo | convoy | crash-recovery | stuck-proposed")
      ->required();
  scenario->add_option("--protocol", protocol, "skeen | ftskeen | whitebox (default)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_sim(config_path, trace_out, snapshots);
    if (check->parsed()) return cmd_check(trace_path, config_path, report_out);
    if (latency->parsed()) return cmd_latency(trace_path, delta);
    if (node->parsed()) return cmd_node(spec_path, node_id, trace_out);
    if (client->parsed()) return cmd_client(spec_path, dest, count, client_id, timeout_ms, trace_out);
    if (scenario->parsed()) return cmd_scenario(scenario_name, protocol);
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 2;
}
