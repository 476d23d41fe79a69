#include <doctest.h>

#include <algorithm>

#include "fairaug/augmenter.hpp"
#include "fairaug/experiments.hpp"
#include "fairaug/numeric.hpp"
#include "helpers.hpp"

using namespace fairaug;

namespace {

struct Setup {
  PreparedData data;
  ModelRun run;
  std::vector<UserItem> candidates;
};

const Setup& small_setup() {
  static const Setup s = [] {
    ExperimentConfig c;
    c.dataset.synthetic = "planted_bias";
    c.dataset.planted.n_users = 80;
    c.dataset.planted.n_items = 60;
    c.dataset.planted.per_user = 12;
    c.dataset.planted.late_per_user = 4;
    c.dataset.k_core = 5;
    ModelConfig m;
    m.embedding_size = 16;
    m.layers = 2;
    m.train_epochs = 15;
    m.batch_size = 256;
    m.seed = 3;
    Setup out;
    out.data = prepare_data(c);
    out.run = train_and_label(out.data, m);
    PolicyConfig pc;
    pc.user_policy = UserPolicy::kLD;
    const auto sampled = sample(pc, out.data.split.train, out.run.labeled, out.run.valid.values);
    out.candidates = build_candidates(out.data.split.train, out.run.labeled, sampled, Scenario::kUser).edges;
    return out;
  }();
  return s;
}

AugmentationConfig quick_config() {
  AugmentationConfig a;
  a.max_epochs = 25;
  a.learning_rate = 0.1;
  a.tau = 0.05;
  return a;
}

}  // namespace

TEST_SUITE("augmenter") {
  TEST_CASE("early stopper: flat trace stops after patience updates") {
    EarlyStopper s(1e-4, 7);
    CHECK_FALSE(s.update(0.10));  // first value always improves on +inf
    int stopped_at = 0;
    for (int epoch = 2; epoch <= 20; ++epoch) {
      if (s.update(0.10)) {
        stopped_at = epoch;
        break;
      }
    }
    CHECK(stopped_at == 8);
  }

  TEST_CASE("early stopper: a large enough drop resets patience") {
    EarlyStopper s(1e-4, 3);
    s.update(0.10);
    CHECK_FALSE(s.update(0.10));
    CHECK_FALSE(s.update(0.09995));  // below min_delta
    CHECK(s.stale() == 2);
    CHECK_FALSE(s.update(0.099));
    CHECK(s.stale() == 0);
    CHECK(s.best() == 0.099);
    CHECK_FALSE(s.update(0.099));
    CHECK_FALSE(s.update(0.099));
    CHECK(s.update(0.099));
    CHECK_THROWS_AS(EarlyStopper(1e-4, 0), ConfigError);
  }

  TEST_CASE("discretize is inclusive at the threshold") {
    std::vector<UserItem> c{{0, 1}, {0, 2}, {1, 3}};
    std::vector<double> p{0.0, -1e-9, 3.0};
    CHECK(discretize(p, c) == std::vector<UserItem>{{0, 1}, {1, 3}});
    CHECK(discretize(p, c, sigmoid(3.0)) == std::vector<UserItem>{{1, 3}});
    CHECK_THROWS_AS(discretize(std::vector<double>{0.0}, c), ContractError);
  }

  TEST_CASE("config validation") {
    AugmentationConfig a;
    a.tau = 0.0;
    CHECK_THROWS_AS(a.validate(), ConfigError);
    a = {};
    a.discretization_threshold = 1.0;
    CHECK_THROWS_AS(a.validate(), ConfigError);
    a = {};
    a.early_stop_patience = 0;
    CHECK_THROWS_AS(a.validate(), ConfigError);
  }

  TEST_CASE("zero learning rate reproduces the base model") {
    const auto& s = small_setup();
    auto a = quick_config();
    a.learning_rate = 0.0;
    a.max_epochs = 5;
    const auto r = augment(s.run.model, s.data.split.train, s.data.valid, s.run.labeled, s.candidates, a);
    CHECK(r.best_epoch == 0);
    CHECK(r.added_edges.empty());
    CHECK(r.trace.size() == 6);
    CHECK(r.stop_reason == StopReason::kMaxEpochs);
    for (const auto& rec : r.trace) {
      CHECK(rec.n_edges == 0);
      CHECK(rec.delta_ndcg_valid == r.trace[0].delta_ndcg_valid);
    }
    CHECK(r.trace[0].delta_ndcg_valid == doctest::Approx(s.run.valid_gap.delta).epsilon(1e-12));
    CHECK(r.augmented.n_edges() == s.data.split.train.n_edges());
  }

  TEST_CASE("a model whose scores ignore the graph never beats epoch 0") {
    const auto& s = small_setup();
    TrainedModel flat = s.run.model;
    flat.embeddings.users.setZero();
    flat.embeddings.items.setZero();
    auto a = quick_config();
    a.p_init = 2.0;  // every candidate is on from the first epoch
    const auto r = augment(flat, s.data.split.train, s.data.valid, s.run.labeled, s.candidates, a);
    CHECK(r.best_epoch == 0);
    CHECK(r.added_edges.empty());
    CHECK(r.stop_reason == StopReason::kEarlyStop);
    // Armed at epoch 1 with the base value, then patience 7 stale updates.
    CHECK(r.trace.size() == 8);
  }

  TEST_CASE("augmentation trace, best epoch and determinism") {
    const auto& s = small_setup();
    const auto a = quick_config();
    const auto r1 = augment(s.run.model, s.data.split.train, s.data.valid, s.run.labeled, s.candidates, a);
    const auto r2 = augment(s.run.model, s.data.split.train, s.data.valid, s.run.labeled, s.candidates, a);
    REQUIRE(r1.trace.size() == r2.trace.size());
    for (std::size_t e = 0; e < r1.trace.size(); ++e) {
      CHECK(r1.trace[e].loss == r2.trace[e].loss);
      CHECK(r1.trace[e].delta_ndcg_valid == r2.trace[e].delta_ndcg_valid);
      CHECK(r1.trace[e].epoch == static_cast<int>(e));
    }
    CHECK(r1.added_edges == r2.added_edges);
    const double best = r1.trace[r1.best_epoch].delta_ndcg_valid;
    for (const auto& rec : r1.trace) CHECK(best <= rec.delta_ndcg_valid);
    // The earliest epoch attaining the minimum wins.
    for (int e = 0; e < r1.best_epoch; ++e) CHECK(r1.trace[e].delta_ndcg_valid > best);
    CHECK(r1.trace[r1.best_epoch].n_edges == static_cast<int>(r1.added_edges.size()));
    for (const auto& e : r1.added_edges) {
      CHECK(std::binary_search(s.candidates.begin(), s.candidates.end(), e));
      CHECK(std::binary_search(s.run.labeled.disadvantaged_users().begin(),
                               s.run.labeled.disadvantaged_users().end(), e.user));
    }
    CHECK(r1.augmented.n_edges() == s.data.split.train.n_edges() + r1.added_edges.size());
  }

  TEST_CASE("non-augmentable models are rejected") {
    const auto& s = small_setup();
    TrainedModel mf = s.run.model;
    mf.config.kind = ModelKind::kMfBpr;
    CHECK_THROWS_AS(augment(mf, s.data.split.train, s.data.valid, s.run.labeled, s.candidates, quick_config()),
                    ContractError);
  }

  TEST_CASE("empty candidate set returns the base record") {
    const auto& s = small_setup();
    const auto r = augment(s.run.model, s.data.split.train, s.data.valid, s.run.labeled, {}, quick_config());
    CHECK(r.stop_reason == StopReason::kEmptyCandidates);
    CHECK(r.trace.size() == 1);
  }

  TEST_CASE("apply_augmentation stamps timestamps and rejects duplicates") {
    InteractionGraph g(2, 3, {{0, 0, 4}, {1, 1, 9}});
    const auto a = apply_augmentation(g, std::vector<UserItem>{{0, 2}});
    CHECK(a.has_edge(0, 2));
    CHECK(a.user_timestamps(0)[1] == 9);
    CHECK(apply_augmentation(g, std::vector<UserItem>{{0, 2}}, 50).max_timestamp() == 50);
    CHECK_THROWS_AS(apply_augmentation(g, std::vector<UserItem>{{0, 0}}), ContractError);
  }

  TEST_CASE("trace csv header") {
    EpochRecord r;
    r.epoch = 3;
    r.n_edges = 2;
    const auto csv = trace_csv({r});
    CHECK(csv.rfind("epoch,l_fair,l_dist,loss,n_edges,delta_ndcg_valid,ndcg_valid,ndcg_group1,ndcg_group2\n", 0) ==
          0);
    CHECK(csv.find("\n3,0,0,0,2,") != std::string::npos);
  }

  TEST_CASE("augmentation export and import round-trip") {
    IdMap ids;
    for (auto k : {"u7", "u8", "u9"}) ids.add_user(k);
    for (auto k : {"i1", "i2"}) ids.add_item(k);
    AugmentationManifest m;
    m.model = "lightgcn";
    m.policy = "ZN+IP";
    m.psi_item = 0.2;
    m.scenario = "U+I";
    m.seed = 42;
    m.best_epoch = 5;
    const std::vector<UserItem> edges{{0, 1}, {2, 0}};
    const auto dir = testutil::temp_dir("augexport").string();
    export_augmentation(edges, ids, m, dir);
    const auto back = import_augmentation(dir, ids);
    CHECK(back.edges == edges);
    CHECK(back.manifest.policy == "ZN+IP");
    CHECK_FALSE(back.manifest.psi_user.has_value());
    CHECK(*back.manifest.psi_item == 0.2);
    CHECK(back.manifest.n_edges == 2);
    CHECK(back.manifest.best_epoch == 5);
    IdMap other;
    other.add_user("u7");
    other.add_item("i1");
    CHECK_THROWS_AS(import_augmentation(dir, other), DataError);
  }
}
