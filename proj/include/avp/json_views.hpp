#pragma once

// JSON shapes shared by the HTTP API and the CLI.

#include <json.hpp>

#include "avp/dashboards.hpp"
#include "avp/events.hpp"
#include "avp/fingerprint.hpp"
#include "avp/similarity.hpp"

namespace avp {

nlohmann::json to_json(const fingerprint::MatchResult& r);
nlohmann::json to_json(const similarity::SimilarityHit& h);
nlohmann::json to_json(const similarity::AssetHit& h);
nlohmann::json to_json(const similarity::SegmentFeature& f);
nlohmann::json to_json(const events::Span& s);
nlohmann::json to_json(const events::LoadReport& r);
nlohmann::json to_json(const dashboards::Recommendation& r);
nlohmann::json to_json(const dashboards::Timeline& t);

// {"clauses":[{"label","min_confidence"}], "combine":"and"|"or",
//  "metadata":{k:v}, "sort":"confidence"|"time"}. Throws InvalidArgument.
events::EventQuery query_from_json(const nlohmann::json& j);

// Parses "label:threshold" (threshold defaults to 0).
events::Clause parse_clause(const std::string& text);

}  // namespace avp
