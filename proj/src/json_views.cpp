#include "avp/json_views.hpp"

#include "avp/error.hpp"

using nlohmann::json;

namespace avp {

json to_json(const fingerprint::MatchResult& r) {
  return json{{"asset_a", r.asset_a},
              {"asset_b", r.asset_b},
              {"offset_s", r.offset_s},
              {"bin_count", r.bin_count},
              {"z_score", r.z_score},
              {"is_match", r.is_match},
              {"matched_hashes", r.matched_hashes}};
}

json to_json(const similarity::SimilarityHit& h) {
  return json{{"asset_id", h.asset_id}, {"segment_idx", h.segment_idx}, {"distance", h.distance}};
}

json to_json(const similarity::AssetHit& h) {
  return json{{"asset_id", h.asset_id}, {"best_distance", h.best_distance}};
}

json to_json(const similarity::SegmentFeature& f) {
  return json{{"asset_id", f.asset_id}, {"segment_idx", f.segment_idx}, {"vector", f.vector}};
}

json to_json(const events::Span& s) {
  return json{{"start_s", s.start_s}, {"end_s", s.end_s}, {"max_confidence", s.max_confidence}};
}

json to_json(const events::LoadReport& r) {
  json violations = json::array();
  for (const auto& v : r.violations) violations.push_back({{"file", v.file}, {"errors", v.errors}});
  return json{{"files_scanned", r.files_scanned},
              {"files_loaded", r.files_loaded},
              {"events_loaded", r.events_loaded},
              {"events_total", r.events_total},
              {"violations", std::move(violations)}};
}

json to_json(const dashboards::Recommendation& r) {
  return json{{"asset_id", r.asset_id},
              {"score", r.score},
              {"distance", r.distance ? json(*r.distance) : json(nullptr)}};
}

json to_json(const dashboards::Timeline& t) {
  json spans = json::array();
  for (const auto& s : t.spans) {
    spans.push_back({{"asset_id", s.asset_id}, {"start_s", s.start_s}, {"end_s", s.end_s}, {"master", s.master}});
  }
  json audit = json::array();
  for (const auto& a : t.audit) {
    audit.push_back({{"asset_b", a.asset_b},
                     {"asset_c", a.asset_c},
                     {"matched", a.matched},
                     {"residual_s", a.matched ? json(a.residual_s) : json(nullptr)},
                     {"clean", a.clean}});
  }
  return json{{"spans", std::move(spans)}, {"audit", std::move(audit)}};
}

events::EventQuery query_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "query must be a JSON object");
  events::EventQuery q;
  try {
    for (const auto& c : j.value("clauses", json::array())) {
      q.clauses.push_back({c.at("label").get<std::string>(), c.value("min_confidence", 0.0)});
    }
    const auto combine = j.value("combine", std::string("and"));
    if (combine == "and") {
      q.combine = events::Combine::And;
    } else if (combine == "or") {
      q.combine = events::Combine::Or;
    } else {
      throw Error(ErrorCode::InvalidArgument, "combine must be \"and\" or \"or\"");
    }
    const auto sort = j.value("sort", std::string("confidence"));
    if (sort == "confidence") {
      q.sort = events::SortOrder::Confidence;
    } else if (sort == "time") {
      q.sort = events::SortOrder::Time;
    } else {
      throw Error(ErrorCode::InvalidArgument, "sort must be \"confidence\" or \"time\"");
    }
    q.metadata = j.value("metadata", MetadataFilter{});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed query: ") + e.what());
  }
  return q;
}

events::Clause parse_clause(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) return {text, 0.0};
  try {
    std::size_t used = 0;
    const auto threshold_text = text.substr(colon + 1);
    const double threshold = std::stod(threshold_text, &used);
    if (used != threshold_text.size()) throw std::invalid_argument(text);
    return {text.substr(0, colon), threshold};
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::InvalidArgument, "clause must look like label:threshold, got " + text);
  }
}

}  // namespace avp
