#ifndef SPARSEFUSE_SCHEDULE_JSON_HPP
#define SPARSEFUSE_SCHEDULE_JSON_HPP

#include <json.hpp>

#include "msp.hpp"

namespace sparsefuse {

// Schedule dump: {fusion, variant, spartitions:[[[ [tag,iter], ...], ...],
// ...], pairs, stats}. Stats carry what the validity and balance checkers
// need: epsilon, pre-merge s-partition levels, per-w-partition costs and the
// slack table.
inline nlohmann::json schedule_to_json(const FusedPartitioning& V,
                                       const DepDag& g1, const DepDag& g2) {
  nlohmann::json j;
  j["fusion"] = V.fusion;
  j["variant"] = V.interleaved ? "interleaved" : "separated";
  j["reuse_ratio"] = V.reuse_ratio;
  nlohmann::json sp = nlohmann::json::array();
  nlohmann::json costs = nlohmann::json::array();
  for (const auto& s : V.spartitions) {
    nlohmann::json ws = nlohmann::json::array();
    nlohmann::json wc = nlohmann::json::array();
    for (const auto& w : s) {
      nlohmann::json entries = nlohmann::json::array();
      Cost c = 0;
      for (const FusedEntry& e : w) {
        entries.push_back({e.tag, e.iter});
        c += e.tag == 1 ? g1.cost[e.iter] : g2.cost[e.iter];
      }
      ws.push_back(std::move(entries));
      wc.push_back(c);
    }
    sp.push_back(std::move(ws));
    costs.push_back(std::move(wc));
  }
  j["spartitions"] = std::move(sp);
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : V.pairs)
    pairs.push_back({p[0], p[1], p[2], p[3]});
  j["pairs"] = std::move(pairs);
  nlohmann::json slack = nlohmann::json::array();
  for (const SlackRecord& r : V.slack)
    slack.push_back({{"tag", r.tag},
                     {"iter", r.iter},
                     {"level", r.level},
                     {"sn", r.sn},
                     {"group", r.group},
                     {"cost", r.cost},
                     {"s", r.placed_s},
                     {"w", r.placed_w}});
  j["stats"] = {{"eps", V.eps},
                {"s_level", V.s_level},
                {"wcosts", std::move(costs)},
                {"slack", std::move(slack)},
                {"entries", V.entry_count()},
                {"n1", V.n1},
                {"n2", V.n2}};
  return j;
}

// Loads a dumped schedule. Replication flags are recovered from entry
// multiplicity.
inline FusedPartitioning schedule_from_json(const nlohmann::json& j) {
  FusedPartitioning V;
  V.fusion = j.at("fusion").get<bool>();
  V.interleaved = j.at("variant").get<std::string>() == "interleaved";
  if (j.contains("reuse_ratio"))
    V.reuse_ratio = j.at("reuse_ratio").get<double>();
  std::vector<Index> copies1;
  for (const auto& s : j.at("spartitions")) {
    std::vector<std::vector<FusedEntry>> ws;
    for (const auto& w : s) {
      std::vector<FusedEntry> entries;
      for (const auto& e : w) {
        FusedEntry fe;
        fe.tag = static_cast<std::uint8_t>(e.at(0).get<int>());
        fe.iter = e.at(1).get<Index>();
        entries.push_back(fe);
        if (fe.tag == 1) {
          if (fe.iter >= static_cast<Index>(copies1.size()))
            copies1.resize(fe.iter + 1, 0);
          ++copies1[fe.iter];
        }
        V.n1 = std::max(V.n1, fe.tag == 1 ? fe.iter + 1 : V.n1);
        V.n2 = std::max(V.n2, fe.tag == 2 ? fe.iter + 1 : V.n2);
      }
      ws.push_back(std::move(entries));
    }
    V.spartitions.push_back(std::move(ws));
  }
  for (auto& s : V.spartitions)
    for (auto& w : s)
      for (FusedEntry& e : w)
        if (e.tag == 1 && copies1[e.iter] > 1)
          e.dup = true;
  if (j.contains("pairs"))
    for (const auto& p : j.at("pairs"))
      V.pairs.push_back({p.at(0).get<Index>(), p.at(1).get<Index>(),
                         p.at(2).get<Index>(), p.at(3).get<Index>()});
  if (j.contains("stats")) {
    const auto& st = j.at("stats");
    if (st.contains("eps"))
      V.eps = st.at("eps").get<double>();
    if (st.contains("s_level"))
      V.s_level = st.at("s_level").get<std::vector<Index>>();
    if (st.contains("slack"))
      for (const auto& r : st.at("slack")) {
        SlackRecord rec;
        rec.tag = static_cast<std::uint8_t>(r.at("tag").get<int>());
        rec.iter = r.at("iter").get<Index>();
        rec.level = r.at("level").get<Index>();
        rec.sn = r.at("sn").get<Index>();
        rec.group = r.at("group").get<Index>();
        rec.cost = r.at("cost").get<Cost>();
        rec.placed_s = r.at("s").get<Index>();
        rec.placed_w = r.at("w").get<Index>();
        V.slack.push_back(rec);
      }
  }
  return V;
}

} // namespace sparsefuse

#endif
