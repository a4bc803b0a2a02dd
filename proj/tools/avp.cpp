// avp: command-line front end over a corpus directory.

#include <csignal>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "avp/dsp.hpp"
#include "avp/error.hpp"
#include "avp/io.hpp"
#include "avp/json_views.hpp"
#include "avp/service.hpp"
#include "avp/workspace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

avp::Metadata parse_pairs(const std::vector<std::string>& pairs) {
  avp::Metadata out;
  for (const auto& p : pairs) {
    const auto eq = p.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw avp::Error(avp::ErrorCode::InvalidArgument, "expected key=value, got " + p);
    }
    out[p.substr(0, eq)] = p.substr(eq + 1);
  }
  return out;
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

std::vector<std::uint8_t> spectro_bytes(const avp::dsp::Spectrogram& spec) {
  avp::io::ByteWriter w;
  w.put_bytes("AVPS");
  w.put_u32(static_cast<std::uint32_t>(spec.n_frames()));
  w.put_u32(static_cast<std::uint32_t>(spec.n_bins()));
  w.put_u32(0);  // reserved, pads the header to 16 bytes
  for (std::size_t f = 0; f < spec.n_frames(); ++f) {
    for (float v : spec.frames.row(f)) w.put_f32(v);
  }
  return w.take();
}

avp::service::Server* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual evidence indexing and synchronization"};
  app.require_subcommand(1);

  std::string root = std::getenv("AVP_ROOT") ? std::getenv("AVP_ROOT") : ".";
  std::string artifact_dir;
  std::string transcoder;
  double tau = 4.0;
  app.add_option("--root", root, "Corpus root directory (default $AVP_ROOT or .)");
  app.add_option("--artifacts", artifact_dir, "Artifact directory (default <root>/artifacts)");
  app.add_option("--transcoder", transcoder, "Shell template for non-WAV input, with {input} and {output}");
  app.add_option("--tau", tau, "Fingerprint match threshold in standard deviations")->check(CLI::PositiveNumber);

  std::vector<std::string> paths, meta, filters, labels;
  std::string asset, asset_b, out, dir, config_path, sort = "confidence";
  bool no_analyze = false, reindex = false, use_or = false, exclude_same = false;
  int k = 10;
  std::optional<std::uint32_t> segment;

  auto* ingest = app.add_subcommand("ingest", "Ingest media files");
  ingest->add_option("paths", paths, "Media files")->required()->check(CLI::ExistingFile);
  ingest->add_option("--meta", meta, "Metadata key=value (repeatable)");
  ingest->add_flag("--no-analyze", no_analyze, "Skip fingerprinting and feature extraction");

  auto* assets = app.add_subcommand("assets", "List catalog assets");
  assets->add_option("--filter", filters, "Metadata key=value clause (repeatable)");

  auto* spectro = app.add_subcommand("spectro", "Dump the magnitude spectrogram as AVPS binary");
  spectro->add_option("asset", asset)->required();
  spectro->add_option("--out", out)->required();

  auto* fp = app.add_subcommand("fingerprint", "Fingerprint an asset and add it to the index");
  fp->add_option("asset", asset)->required();
  fp->add_flag("--reindex", reindex, "Replace an existing fingerprint");

  auto* match = app.add_subcommand("match", "Match two fingerprinted assets");
  match->add_option("asset_a", asset)->required();
  match->add_option("asset_b", asset_b)->required();

  auto* match_all = app.add_subcommand("match-all", "Match one asset against the whole index");
  match_all->add_option("asset", asset)->required();

  auto* features = app.add_subcommand("features", "Extract and print segment features");
  features->add_option("asset", asset)->required();

  auto* similar = app.add_subcommand("similar", "Nearest segments or assets by acoustic texture");
  similar->add_option("asset", asset)->required();
  similar->add_option("--segment", segment, "Query segment index; omit for asset-level results");
  similar->add_option("-k", k, "Result count")->check(CLI::PositiveNumber);
  similar->add_flag("--exclude-same", exclude_same, "Exclude segments of the query asset");

  auto* load = app.add_subcommand("load-artifacts", "Validate and index detection artifacts");
  load->add_option("dir", dir, "Artifact directory (default the configured one)");

  auto* query = app.add_subcommand("query", "Query the event index");
  query->add_option("--label", labels, "label:min_confidence (repeatable)")->required();
  auto* and_flag = query->add_flag("--and", "All clauses must hold (default)");
  query->add_flag("--or", use_or, "Any clause may hold")->excludes(and_flag);
  query->add_option("--meta", filters, "Metadata key=value clause (repeatable)");
  query->add_option("--sort", sort, "confidence or time")->check(CLI::IsMember({"confidence", "time"}));

  auto* qd = app.add_subcommand("quickdetect", "Run the heuristic impulse and sustained-tone detectors");
  qd->add_option("asset", asset)->required();
  qd->add_option("--out", out, "Output directory (default the artifact directory)");

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--config", config_path, "JSON config (default $AVP_CONFIG)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (serve->parsed()) {
      const auto cfg = avp::service::load_config(
          avp::service::resolve_config_path(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path)));
      avp::service::Server server(cfg);
      g_server = &server;
      std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
      std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
      std::cerr << "listening on " << cfg.listen_address << ":" << cfg.port << "\n";
      if (!server.listen()) throw avp::Error(avp::ErrorCode::ConfigError, "cannot bind listen address");
      return 0;
    }

    avp::WorkspaceConfig wc;
    wc.corpus_root = root;
    wc.artifact_dir = artifact_dir;
    wc.catalog.transcoder = transcoder;
    wc.fingerprint.tau = tau;
    avp::Workspace ws(wc);
    ws.fingerprints().set_tau(tau);

    if (ingest->parsed()) {
      const auto md = parse_pairs(meta);
      json outj = json::array();
      for (const auto& p : paths) outj.push_back(avp::to_json(ws.ingest(p, md, !no_analyze)));
      print(outj);
    } else if (assets->parsed()) {
      json outj = json::array();
      for (const auto& a : ws.catalog().list_assets(parse_pairs(filters))) outj.push_back(avp::to_json(a));
      print(outj);
    } else if (spectro->parsed()) {
      const auto spec = avp::dsp::stft(*ws.catalog().get_audio(asset));
      avp::io::write_file_atomic(out, spectro_bytes(spec));
      print(json{{"asset_id", asset}, {"n_frames", spec.n_frames()}, {"n_bins", spec.n_bins()}, {"out", out}});
    } else if (fp->parsed()) {
      const auto pcm = ws.catalog().get_audio(asset);
      const auto hashes = avp::fingerprint::fingerprint_audio(*pcm, ws.fingerprints().config());
      ws.fingerprints().index_asset(asset, pcm->duration_s(), hashes, reindex);
      print(json{{"asset_id", asset}, {"hashes", hashes.size()}, {"postings", ws.fingerprints().posting_count()}});
    } else if (match->parsed()) {
      print(avp::to_json(ws.fingerprints().match_pair(asset, asset_b)));
    } else if (match_all->parsed()) {
      json outj = json::array();
      for (const auto& r : ws.fingerprints().match_all(asset)) outj.push_back(avp::to_json(r));
      print(outj);
    } else if (features->parsed()) {
      if (!ws.features().contains(asset)) ws.analyze(asset);
      json outj = json::array();
      for (const auto& f : ws.features().features(asset)) outj.push_back(avp::to_json(f));
      print(outj);
    } else if (similar->parsed()) {
      json outj = json::array();
      if (segment) {
        const auto scope = exclude_same ? avp::similarity::Scope::ExcludeSameAsset : avp::similarity::Scope::All;
        for (const auto& h : ws.features().knn(asset, *segment, k, scope, ws.weights())) outj.push_back(avp::to_json(h));
      } else {
        for (const auto& h : ws.features().similar_assets(asset, k, ws.weights())) outj.push_back(avp::to_json(h));
      }
      print(outj);
    } else if (load->parsed()) {
      const auto report = dir.empty() ? ws.load_artifacts() : ws.events().load_artifacts(dir, ws.durations());
      print(avp::to_json(report));
      return report.violations.empty() ? 0 : 3;
    } else if (query->parsed()) {
      avp::events::EventQuery q;
      for (const auto& l : labels) q.clauses.push_back(avp::parse_clause(l));
      q.combine = use_or ? avp::events::Combine::Or : avp::events::Combine::And;
      q.sort = sort == "time" ? avp::events::SortOrder::Time : avp::events::SortOrder::Confidence;
      q.metadata = parse_pairs(filters);
      avp::events::EventIndex::AssetFilter filter;
      if (!q.metadata.empty()) {
        filter = [&](const std::string& id) {
          const auto a = ws.catalog().find(id);
          return a && avp::matches(a->metadata, q.metadata);
        };
      }
      json outj = json::array();
      for (const auto& hit : ws.events().query(q, filter)) {
        json evs = json::array();
        for (const auto& e : hit.events) evs.push_back(avp::events::to_json(e));
        outj.push_back({{"asset_id", hit.asset_id}, {"rank_score", hit.rank_score}, {"events", evs}});
      }
      print(outj);
    } else if (qd->parsed()) {
      const auto artifact =
          ws.quickdetect(asset, {}, out.empty() ? std::nullopt : std::optional<fs::path>(out));
      print(avp::events::to_json(artifact));
    }
  } catch (const avp::Error& e) {
    std::cerr << "error: " << avp::to_string(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
