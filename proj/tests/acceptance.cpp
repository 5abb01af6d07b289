// Acceptance run: one PASS/FAIL line per criterion. Exit status is 0 only when
// every criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "datagen.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "fixtures.hpp"
#include "gqe.hpp"
#include "model.hpp"
#include "oracles.hpp"

using namespace biqe;
using namespace biqe::testing;

namespace {

// Tolerances and budgets.
constexpr double kGradStep = 1e-3;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr double kEquivarianceTol = 1e-5;
constexpr int kEquivarianceDags = 100;
constexpr int kDecomposeDags = 200;
constexpr int kRankCases = 1000;
constexpr int kGroundQueries = 50;
constexpr double kMemorizeHits1 = 0.95;
constexpr int kMemorizeMaxEpochs = 200;
constexpr double kMemorizeSeconds = 600.0;
constexpr int kMemorizeEvalEvery = 10;
constexpr int kSeeds = 3;
constexpr int kCompareEpochs = 80;
constexpr std::size_t kPathLimit = 50000;

// Desk-scale data and model shared by the training criteria.
constexpr int kWalksPerNode = 8;
constexpr std::size_t kMaxLen = 64;
constexpr std::size_t kBatch = 64;
constexpr double kEncoderLr = 2e-3;
constexpr double kGqeLr = 1e-2;

// Reference values from the original experiments, reported only.
constexpr double kReferenceBiqeCq = 0.228;
constexpr double kReferenceGqeCq = 0.157;
constexpr double kReferenceBiqePaths = 0.473;
constexpr double kReferenceNoFuturePaths = 0.421;
constexpr double kReferenceNonRelative = 0.304;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& run) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    o = run();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(),
              seconds_since(t0));
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Dataset desk_dataset(std::uint64_t seed) {
  SyntheticKgOptions so;
  so.seed = seed;
  const auto graphs = split_graph(synthetic_kg(so), 0.1, 0.1, seed);
  GenerateOptions o;
  o.mine.seed = seed;
  o.mine.walks_per_node = kWalksPerNode;
  o.heldout_walks = WalkGraph::split_and_train;
  return generate_dataset(graphs, o);
}

EncoderModel<float> desk_encoder(const Dataset& d, std::uint64_t seed, double dropout) {
  ModelConfig base;
  base.num_layers = 2;
  base.num_heads = 4;
  base.hidden = 64;
  base.ff = 256;
  base.max_positions = 16;
  base.dropout = dropout;
  base.seed = seed;
  return make_encoder<float>(config_for(d.vocab(), base), kMaxLen);
}

TrainSchedule desk_schedule(std::uint64_t seed, int epochs, double lr) {
  TrainSchedule s;
  s.epochs = epochs;
  s.batch_size = kBatch;
  s.seed = seed;
  s.adam.lr = lr;
  return s;
}

// ---- 1 ----

TrainExample labelled(const QueryDag& dag, const Vocabulary& vocab, std::size_t max_len,
                      std::uint64_t seed) {
  TrainExample ex;
  ex.seq = encode_query(dag, vocab, max_len);
  Rng rng(seed);
  std::map<NodeId, EntityId> gold;
  for (const auto& s : ex.seq.mask_slots) {
    if (!gold.contains(s.variable))
      gold[s.variable] = static_cast<EntityId>(uniform_index(rng, vocab.num_entities));
    ex.gold.push_back(gold[s.variable]);
  }
  return ex;
}

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  const Vocabulary vocab{12, 4};
  ModelConfig c;
  c.num_layers = 2;
  c.num_heads = 2;
  c.hidden = 16;
  c.ff = 32;
  c.max_positions = 12;
  c.vocab_size = vocab.size();
  c.num_entities = vocab.num_entities;
  c.dropout = 0.0;
  c.seed = 21;
  const auto params = perturbed_params(init_params<double>(c), 0.3, 17);
  Rng rng(9);
  const std::vector<TrainExample> batch{
      labelled(star_query(1, 2), vocab, 16, 1),
      labelled(chain_query(3, {0, 1, 2}, {NodeKind::existential, NodeKind::target, NodeKind::target}),
               vocab, 16, 2),
      labelled(chain_query(4, {3}, {NodeKind::target}), vocab, 16, 3),
      labelled(random_bowtie_tree(rng, 2, 2, 12, 4), vocab, 40, 4)};

  double worst = 0;
  std::string worst_name;
  std::size_t groups = 0;
  for (auto mode : {AttentionMode::bidirectional, AttentionMode::no_future}) {
    GradientOptions opts;
    opts.mode = mode;
    const auto g = gradients(c, params, std::span<const TrainExample>(batch), opts);
    const auto fd = finite_difference_grads(c, params, batch, mode, kGradStep);
    g.grads.visit([&](const std::string& name, const Mat<double>& a) {
      const auto& n = fd.at(name);
      const double scale = std::max(a.norm(), n.norm());
      const double err = scale < 1e-12 ? 0.0 : (a - n).norm() / scale;
      if (err > worst) worst = err, worst_name = name;
      ++groups;
    });
  }
  const double secs = seconds_since(t0);
  return {worst <= kGradRelTol && secs < kGradSeconds,
          fmt("max group relative error %.2e (%s) over %zu groups, tol %.0e; %.1fs of %.0fs", worst,
              worst_name.c_str(), groups, kGradRelTol, secs, kGradSeconds)};
}

// ---- 2 ----

std::vector<std::vector<std::size_t>> permutations_to_try(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::vector<std::vector<std::size_t>> out;
  if (n <= 4) {
    while (std::next_permutation(p.begin(), p.end())) out.push_back(p);
    return out;
  }
  out.emplace_back(p.rbegin(), p.rend());
  for (int i = 0; i < 12; ++i) {
    shuffle_range(p.begin(), p.end(), rng);
    out.push_back(p);
  }
  return out;
}

Outcome permutation_equivariance() {
  const Vocabulary vocab{20, 4};
  ModelConfig base;
  base.num_layers = 2;
  base.num_heads = 2;
  base.hidden = 16;
  base.ff = 32;
  base.max_positions = 16;
  base.dropout = 0.1;
  base.seed = 5;
  auto model = make_encoder<double>(config_for(vocab, base), 256);
  model.params = perturbed_params(model.params, 0.3, 6);

  Rng rng(derive_seed(2, "equivariance", {}));
  int tested = 0;
  std::size_t perms = 0;
  double worst = 0;
  while (tested < kEquivarianceDags) {
    const auto dag = random_dag(rng, 8, vocab.num_entities, vocab.num_relations);
    if (!validate(dag).empty() || dag.targets().empty()) continue;
    const auto paths = decompose(dag);
    if (paths.size() < 2 || paths.size() > 16) continue;
    std::vector<std::size_t> identity(paths.size());
    std::iota(identity.begin(), identity.end(), 0);
    const auto ref = predict_query(model, dag, AttentionMode::bidirectional, identity).probs;
    for (const auto& order : permutations_to_try(paths.size(), rng)) {
      const auto got = predict_query(model, dag, AttentionMode::bidirectional, order).probs;
      if (got.size() != ref.size()) return {false, "target set changed under a permutation"};
      for (const auto& [v, p] : ref)
        for (std::size_t e = 0; e < p.size(); ++e) worst = std::max(worst, std::abs(p[e] - got.at(v)[e]));
      ++perms;
    }
    ++tested;
  }
  return {worst <= kEquivarianceTol,
          fmt("%d DAGs, %zu permutations, max |diff| %.2e, tol %.0e", tested, perms, worst,
              kEquivarianceTol)};
}

// ---- 3 ----

Outcome decomposition_oracle() {
  int mismatches = 0;
  std::size_t total_paths = 0;
  for (int s = 0; s < kDecomposeDags; ++s) {
    Rng rng(derive_seed(3, "decompose", {static_cast<std::uint64_t>(s)}));
    const auto dag = random_dag(rng, 12, 20, 4);
    const auto expect = brute_force_paths(dag);
    total_paths += expect.size();
    if (decompose(dag, std::max<std::size_t>(expect.size(), 1)) != expect) ++mismatches;
  }
  int tree_mismatches = 0;
  for (int s = 0; s < 100; ++s) {
    Rng rng(derive_seed(3, "tree", {static_cast<std::uint64_t>(s)}));
    const int m = 1 + static_cast<int>(uniform_index(rng, 4));
    const int n = 1 + static_cast<int>(uniform_index(rng, 4));
    const auto dag = random_bowtie_tree(rng, m, n, 10, 3);
    if (decompose(dag).size() != static_cast<std::size_t>(m * n)) ++tree_mismatches;
  }
  return {mismatches == 0 && tree_mismatches == 0,
          fmt("%d/%d DAGs differ from DFS (%zu paths); %d/100 trees differ from roots*leaves",
              mismatches, kDecomposeDags, total_paths, tree_mismatches)};
}

// ---- 4 ----

Outcome ranking_oracle(const Dataset& d) {
  Rng rng(derive_seed(4, "rank", {}));
  int mismatches = 0;
  for (int c = 0; c < kRankCases; ++c) {
    const int n = 2 + static_cast<int>(uniform_index(rng, 60));
    std::vector<double> scores(n);
    for (auto& s : scores) s = static_cast<double>(uniform_index(rng, 8));  // many ties
    const auto gold = static_cast<EntityId>(uniform_index(rng, n));
    std::set<EntityId> filter;
    const int k = static_cast<int>(uniform_index(rng, n));
    for (int i = 0; i < k; ++i) filter.insert(static_cast<EntityId>(uniform_index(rng, n)));
    if (uniform_index(rng, 2)) filter.insert(gold);
    const std::vector<EntityId> fv(filter.begin(), filter.end());
    if (filtered_rank(scores, gold, fv) != sorted_filtered_rank(scores, gold, filter)) ++mismatches;
  }
  const OracleScorer oracle(d.graphs.full.num_entities());
  std::vector<Query> queries;
  for (const char* split : {"dev", "test"})
    for (const auto& q : split_queries(d, split, {"paths", "dags"})) queries.push_back(q);
  const auto r = evaluate_split(oracle, queries, d.filters).overall;
  const bool perfect = r.mrr() == 1.0 && r.hits(1) == 1.0 && r.hits(3) == 1.0 && r.hits(10) == 1.0;
  return {mismatches == 0 && perfect && r.count > 0,
          fmt("%d/%d rank mismatches; oracle scorer on %zu targets: MRR %.4f H@1 %.4f H@3 %.4f "
              "H@10 %.4f",
              mismatches, kRankCases, r.count, r.mrr(), r.hits(1), r.hits(3), r.hits(10))};
}

// ---- 5 ----

Outcome ground_answer_oracle() {
  int mismatches = 0, nonempty = 0;
  for (int s = 0; s < kGroundQueries; ++s) {
    Rng rng(derive_seed(5, "ground", {static_cast<std::uint64_t>(s)}));
    const int ents = 8 + static_cast<int>(uniform_index(rng, 23));
    const auto kg = random_kg(rng, ents, 3, ents * 4);
    QueryDag dag;
    do {
      dag = random_dag(rng, 6, ents, 3, 0.6);
    } while (std::count_if(dag.nodes.begin(), dag.nodes.end(),
                           [](const QueryNode& n) { return n.kind != NodeKind::anchor; }) > 4);
    const auto expect = all_assignments_answers(dag, kg);
    if (ground_answers(dag, kg) != expect) ++mismatches;
    for (const auto& [v, a] : expect) nonempty += !a.empty();
  }
  return {mismatches == 0 && nonempty > 0,
          fmt("%d/%d queries differ from all-assignments enumeration (KGs of 8..30 entities); "
              "%d non-empty answer sets",
              mismatches, kGroundQueries, nonempty)};
}

// ---- 6 ----

// Different target variables whose mask slots see identical token and position
// multisets receive identical distributions. Per group of such variables, counts
// the best case where the shared top entity is a correct answer for each.
double collision_ceiling(const Dataset& d, std::span<const Query> queries) {
  const auto vocab = d.vocab();
  std::size_t total = 0, best_sum = 0;
  for (const auto& q : queries) {
    const auto seq = encode_query(q.dag, vocab, kMaxLen);
    std::map<NodeId, std::multiset<int>> sig;
    for (const auto& s : seq.mask_slots) sig[s.variable].insert(seq.positions[s.index]);
    std::map<std::multiset<int>, std::vector<NodeId>> groups;
    for (const auto& [v, m] : sig) groups[m].push_back(v);
    for (const auto& [m, vs] : groups) {
      total += vs.size();
      std::size_t best = 0;
      for (NodeId cand : vs) {
        const EntityId top = q.answers.at(cand);
        std::size_t hits = 0;
        for (NodeId v : vs) {
          const auto& f = d.filters.at({q.id, v});
          hits += q.answers.at(v) == top || std::binary_search(f.begin(), f.end(), top);
        }
        best = std::max(best, hits);
      }
      best_sum += best;
    }
  }
  return total ? static_cast<double>(best_sum) / static_cast<double>(total) : 0.0;
}

Outcome memorization(const Dataset& d) {
  const auto train = training_queries(d);
  auto model = desk_encoder(d, 1, 0.0);
  const auto t0 = Clock::now();
  double h1 = 0;
  int epochs = 0;
  train_encoder(model, train, {}, desk_schedule(1, kMemorizeMaxEpochs, kEncoderLr),
                [&](int epoch, double) {
                  epochs = epoch;
                  const bool last = epoch == kMemorizeMaxEpochs;
                  const bool out_of_time = seconds_since(t0) > kMemorizeSeconds;
                  if (epoch % kMemorizeEvalEvery == 0 || last || out_of_time) {
                    EncoderScorer<float> scorer(model, AttentionMode::bidirectional);
                    h1 = evaluate_split(scorer, train, d.filters).overall.hits(1);
                  }
                  return h1 < kMemorizeHits1 && !out_of_time;
                });
  const double secs = seconds_since(t0);
  return {h1 >= kMemorizeHits1 && secs < kMemorizeSeconds,
          fmt("train Hits@1 %.4f after %d epochs on %zu queries, need %.2f within %d epochs and "
              "%.0fs (took %.0fs); inputs shared by distinct targets cap Hits@1 near %.4f",
              h1, epochs, train.size(), kMemorizeHits1, kMemorizeMaxEpochs, kMemorizeSeconds, secs,
              collision_ceiling(d, train))};
}

// ---- 7, 8, 9 ----

struct SeedRun {
  std::uint64_t seed = 0;
  double enc_dags = 0, gqe_dags = 0, enc_paths = 0;
  double full_paths = 0, no_future_paths = 0;
  std::size_t forbidden_checked = 0, forbidden_nonzero = 0;
  EncoderModel<float> model;
  Dataset data;
};

SeedRun run_seed(std::uint64_t seed) {
  SeedRun r;
  r.seed = seed;
  r.data = desk_dataset(seed);
  const auto& d = r.data;
  const auto train = training_queries(d);
  const auto& test = d.splits.at("test");

  r.model = desk_encoder(d, seed, 0.1);
  train_encoder(r.model, train, {}, desk_schedule(seed, kCompareEpochs, kEncoderLr));
  EncoderScorer<float> enc(r.model, AttentionMode::bidirectional);
  r.enc_dags = evaluate_split(enc, test.dags, d.filters).overall.mrr();
  r.enc_paths = evaluate_split(enc, test.paths, d.filters).overall.mrr();

  auto gqe = make_gqe({static_cast<int>(d.graphs.full.num_entities()),
                       static_cast<int>(d.graphs.full.num_relations()), 64, seed});
  train_gqe(gqe, train, {}, desk_schedule(seed, kCompareEpochs, kGqeLr));
  r.gqe_dags = evaluate_split(GqeScorer(gqe), test.dags, d.filters).overall.mrr();

  const auto ablation = run_ablation(r.model, test.paths, d.filters);
  r.full_paths = ablation.full.overall.mrr();
  r.no_future_paths = ablation.no_future.overall.mrr();

  for (const auto* list : {&test.paths, &test.dags})
    for (const auto& q : *list) {
      const auto seq = encode_query(q.dag, r.model.vocab(), kMaxLen);
      const auto off = seq.source_offsets();
      const auto out = forward(r.model.config, r.model.params, seq, AttentionMode::no_future, true);
      const int n = out.attention.real_length;
      for (const auto& w : out.attention.weights)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            if (off[j] > off[i]) {
              ++r.forbidden_checked;
              r.forbidden_nonzero += w(i, j) != 0.0f;
            }
    }
  return r;
}

std::string per_seed(const std::vector<SeedRun>& runs,
                     const std::function<std::string(const SeedRun&)>& f) {
  std::string s;
  for (const auto& r : runs) s += (s.empty() ? "" : "; ") + fmt("seed %llu ", (unsigned long long)r.seed) + f(r);
  return s;
}

int majority() { return kSeeds / 2 + 1; }

Outcome comparative_direction(const std::vector<SeedRun>& runs) {
  int wins = 0;
  for (const auto& r : runs) wins += r.enc_dags >= r.gqe_dags;
  return {wins >= majority(),
          fmt("encoder >= GQE-MP on held-out DAG MRR in %d/%d seeds (",
              wins, kSeeds) +
              per_seed(runs, [](const SeedRun& r) {
                return fmt("%.4f vs %.4f", r.enc_dags, r.gqe_dags);
              }) +
              fmt("); reference %.3f vs %.3f", kReferenceBiqeCq, kReferenceGqeCq)};
}

Outcome path_vs_dag(const std::vector<SeedRun>& runs) {
  int wins = 0;
  for (const auto& r : runs) wins += r.enc_paths >= r.enc_dags;
  return {wins >= majority(),
          fmt("held-out path MRR >= DAG MRR in %d/%d seeds (", wins, kSeeds) +
              per_seed(runs, [](const SeedRun& r) {
                return fmt("%.4f vs %.4f", r.enc_paths, r.enc_dags);
              }) +
              fmt("); reference %.3f vs %.3f", kReferenceBiqePaths, kReferenceBiqeCq)};
}

Outcome ablation_mechanics(const std::vector<SeedRun>& runs) {
  int wins = 0;
  std::size_t checked = 0, nonzero = 0;
  for (const auto& r : runs) {
    wins += r.no_future_paths <= r.full_paths;
    checked += r.forbidden_checked;
    nonzero += r.forbidden_nonzero;
  }
  return {nonzero == 0 && checked > 0 && wins >= majority(),
          fmt("%zu/%zu forbidden attention entries non-zero; no-future <= full path MRR in %d/%d "
              "seeds (",
              nonzero, checked, wins, kSeeds) +
              per_seed(runs, [](const SeedRun& r) {
                return fmt("%.4f vs %.4f", r.no_future_paths, r.full_paths);
              }) +
              fmt("); reference %.3f vs %.3f", kReferenceNoFuturePaths, kReferenceBiqePaths)};
}

// ---- 10 ----

bool star_shaped(const QueryDag& dag, int max_branches) {
  const auto leaves = dag.leaves();
  if (leaves.size() != 1) return false;
  const NodeId sink = leaves.front();
  if (dag.in_degree(sink) != 1) return false;
  NodeId center = -1;
  for (const auto& e : dag.edges)
    if (e.dst == sink) center = e.src;
  const auto in_c = dag.in_degree(center);
  if (dag.out_degree(center) != 1 || in_c < 2 || in_c > static_cast<std::size_t>(max_branches))
    return false;
  for (const auto& n : dag.nodes) {
    if (n.id == center || n.id == sink) continue;
    if (dag.out_degree(n.id) != 1 || dag.in_degree(n.id) > 1) return false;
  }
  return dag.roots().size() == in_c;
}

std::vector<char> bytes_of(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome generator_suite(const Dataset& d) {
  std::size_t dags = 0, bad_dags = 0, invalid = 0, heldout = 0, unanswered = 0, bad_depth = 0;
  for (const char* split : kSplits) {
    const auto& s = d.splits.at(split);
    const bool held = std::string(split) != "train";
    for (const auto* list : {&s.triples, &s.paths, &s.dags})
      for (const auto& q : *list) {
        invalid += !validate(q.dag).empty();
        if (!held) continue;
        ++heldout;
        const auto ans = ground_answers(q.dag, d.graphs.full);
        for (NodeId t : q.dag.targets()) unanswered += ans.at(t).empty();
      }
    for (const auto& q : s.paths) bad_depth += q.dag.edges.size() < 2 || q.dag.edges.size() > 5;
    for (const auto& q : s.dags) {
      ++dags;
      bad_dags += !star_shaped(q.dag, 3);
    }
  }

  SyntheticKgOptions so;
  so.seed = 1;
  MineOptions mo;
  mo.seed = 1;
  mo.walks_per_node = 1000;
  const auto capped = mine_paths(synthetic_kg(so), mo, "train").size();

  const auto a = temp_dir("acceptance_gen_a"), b = temp_dir("acceptance_gen_b");
  write_dataset(desk_dataset(1), a);
  write_dataset(desk_dataset(1), b);
  std::size_t files = 0, differing = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    differing += bytes_of(entry.path()) != bytes_of(b / std::filesystem::relative(entry.path(), a));
  }
  return {invalid == 0 && bad_dags == 0 && unanswered == 0 && bad_depth == 0 && dags > 0 &&
              capped == kPathLimit && differing == 0 && files > 0,
          fmt("%zu invalid queries; %zu/%zu DAGs not star-shaped; %zu targets without a full-graph "
              "answer over %zu held-out queries; %zu paths outside depth 2..5; path cap gave %zu of "
              "%zu; %zu/%zu files differ on rerun",
              invalid, bad_dags, dags, unanswered, heldout, bad_depth, capped, kPathLimit, differing,
              files)};
}

// ---- 11 ----

Outcome attention_analysis(const SeedRun& r) {
  const auto& test = r.data.splits.at("test");
  std::vector<Query> queries = test.dags;
  queries.insert(queries.end(), test.paths.begin(), test.paths.end());
  const double fraction = attention_nonrelative_fraction(r.model, queries);

  // A chain relates every token to every mask slot.
  const auto chain = chain_query(0, {0, 1, 2}, {NodeKind::target, NodeKind::target, NodeKind::target});
  Query q;
  q.id = "chain";
  q.kind = QueryKind::path;
  q.dag = chain;
  for (NodeId t : chain.targets()) q.answers[t] = 0;
  const double zero = attention_nonrelative_fraction(r.model, std::span<const Query>(&q, 1));
  return {fraction >= 0.0 && fraction <= 1.0 && zero == 0.0,
          fmt("non-relative fraction %.4f on %zu held-out queries, %.4f on an all-relative chain; "
              "reference %.3f",
              fraction, queries.size(), zero, kReferenceNonRelative)};
}

// ---- 12 ----

Outcome checkpoint_round_trip(const SeedRun& r) {
  const auto dir = temp_dir("acceptance_ckpt");
  save_encoder(r.model, dir / "enc.ckpt");
  const auto back = load_encoder<float>(dir / "enc.ckpt");
  std::vector<const Mat<float>*> xs, ys;
  r.model.params.visit([&](const std::string&, const Mat<float>& m) { xs.push_back(&m); });
  back.params.visit([&](const std::string&, const Mat<float>& m) { ys.push_back(&m); });
  std::size_t differing = 0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    differing += xs[i]->rows() != ys[i]->rows() || xs[i]->cols() != ys[i]->cols() ||
                 std::memcmp(xs[i]->data(), ys[i]->data(), sizeof(float) * xs[i]->size()) != 0;

  const auto bytes = bytes_of(dir / "enc.ckpt");
  std::size_t flips = 0, accepted = 0;
  for (std::size_t i = 0; i < bytes.size(); i += std::max<std::size_t>(1, bytes.size() / 64)) {
    auto bad = bytes;
    bad[i] = static_cast<char>(bad[i] ^ 0x01);
    {
      std::ofstream out(dir / "bad.ckpt", std::ios::binary);
      out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    }
    ++flips;
    try {
      load_encoder<float>(dir / "bad.ckpt");
      ++accepted;
    } catch (const Error&) {
    }
  }

  auto gqe = make_gqe({10, 3, 8, 2});
  save_gqe(gqe, dir / "gqe.ckpt");
  const auto gback = load_gqe(dir / "gqe.ckpt");
  const bool gqe_same = gback.params.ent == gqe.params.ent &&
                        gback.params.rel == gqe.params.rel;
  return {differing == 0 && accepted == 0 && gqe_same && back.config == r.model.config,
          fmt("%zu/%zu encoder arrays differ after reload; GQE arrays %s; %zu/%zu corrupted "
              "files accepted",
              differing, xs.size(), gqe_same ? "identical" : "differ", accepted, flips)};
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  const auto base = desk_dataset(1);

  report(1, "gradient fidelity", gradient_fidelity);
  report(2, "path-permutation equivariance", permutation_equivariance);
  report(3, "decomposition oracle", decomposition_oracle);
  report(4, "ranking oracle", [&] { return ranking_oracle(base); });
  report(5, "ground-answer oracle", ground_answer_oracle);
  report(6, "memorization", [&] { return memorization(base); });

  std::vector<SeedRun> runs;
  std::string run_error;
  try {
    for (int s = 1; s <= kSeeds; ++s) runs.push_back(run_seed(static_cast<std::uint64_t>(s)));
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  const auto need_runs = [&](auto f) {
    return [&, f]() -> Outcome {
      if (!run_error.empty()) return {false, "training failed: " + run_error};
      return f();
    };
  };
  report(7, "comparative direction", need_runs([&] { return comparative_direction(runs); }));
  report(8, "path-vs-DAG direction", need_runs([&] { return path_vs_dag(runs); }));
  report(9, "ablation mechanics", need_runs([&] { return ablation_mechanics(runs); }));
  report(10, "generator structural suite", [&] { return generator_suite(base); });
  report(11, "attention analysis", need_runs([&] { return attention_analysis(runs.front()); }));
  report(12, "checkpoint round trip", need_runs([&] { return checkpoint_round_trip(runs.front()); }));

  std::printf("%d/12 criteria passed in %.0fs\n", 12 - failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
