"""
From case roster to co-worker network
=====================================

A hand-sized surgical roster is segmented, linked into a two-mode
case-provider network, projected onto providers, and measured.
"""

# Six cases over two years, teams of two to four providers each.
from surgnet.records import CaseRecord, segment_cases


def case(case_id, day, providers):
    return CaseRecord(case_id=case_id, day_offset=day, end_day_offset=day + 4,
                      providers=frozenset(providers), age=60, gender="female",
                      surgery_type=1, dx_codes=())


cases = [
    case("c1", 10, ["anna", "ben", "chris"]),
    case("c2", 40, ["anna", "dana"]),
    case("c3", 90, ["ben", "chris", "dana", "eli"]),
    case("c4", 200, ["eli", "fay"]),
    case("c5", 400, ["anna", "ben"]),          # second year starts at day 365
    case("c6", 500, ["chris", "fay", "gus"]),
]

# Slice the roster into consecutive 365-day segments. Networks are built
# per segment so that a pair only counts as co-workers if they actually
# overlapped in time.
segments = segment_cases(cases, window_days=365)
for seg in segments:
    ids = ", ".join(c.case_id for c in seg.cases)
    print(f"segment {seg.index}: days [{seg.start_day}, "
          f"{seg.end_day_exclusive}) holding {ids}")

# Build the two-mode network of the first segment and project it: every
# case's team becomes a clique, and repeat collaborations collapse onto a
# single unweighted edge.
from surgnet.network import build_bipartite, project_one_mode

two_mode = build_bipartite(segments[0])
print(f"\ntwo-mode: {len(two_mode.case_nodes)} cases, "
      f"{len(two_mode.provider_nodes)} providers, {len(two_mode.edges)} links")

graph = project_one_mode(two_mode)
print(f"one-mode: {graph.n_nodes} providers, {graph.n_edges} edges")
for u, v in graph.edges():
    shared = graph.pair_counts[(u, v)]
    print(f"  {u} -- {v}  (shared cases: {shared})")

# Compute all five node measures. Everything is normalized to [0, 1];
# see the docstrings in surgnet.centrality for the exact conventions.
from surgnet.centrality import compute_all, team_aggregate

metrics = compute_all(graph)
print("\nprovider   degree  betweenness  closeness  eigenvector  clustering")
for pid in graph.nodes:
    m = metrics[pid]
    print(f"{pid:<10} {m.degree:6.3f}  {m.betweenness:11.3f}  "
          f"{m.closeness:9.3f}  {m.eigenvector:11.3f}  {m.clustering:10.3f}")

# Each case is then described by the average measures of its team --
# these are the avgBtwn / avgClos / ... covariates of the regression.
team = team_aggregate(segments[0].cases[0], metrics)
print(f"\nteam of {team.case_id}: size {team.team_size}, "
      f"avg betweenness {team.avg_betweenness:.3f}, "
      f"avg closeness {team.avg_closeness:.3f}")
