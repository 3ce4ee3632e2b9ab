#include <catch2/catch_amalgamated.hpp>
#include <modechoice/dataset.hpp>
#include <modechoice/halton.hpp>
#include <modechoice/rng.hpp>

#include <set>
#include <sstream>

using namespace modechoice;

namespace {

CsvTable table_from(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in, "test");
}

/// Random small long-form dataset for round-trip and fuzz checks.
ChoiceDataset random_dataset(Rng& rng, int n_obs, int n_alts, int n_feat) {
  std::ostringstream out;
  out << "obs_id,person_id,alt,chosen";
  for (int p = 0; p < n_feat; ++p) out << ",f" << p;
  out << "\n";
  // feature 0 is individual-level, the rest vary by alternative
  for (int i = 0; i < n_obs; ++i) {
    int chosen = static_cast<int>(rng.below(n_alts));
    double indiv = rng.uniform(-2, 2);
    for (int k = 0; k < n_alts; ++k) {
      out << (i + 1) << "," << (i / 3 + 1) << ",alt" << k << "," << (k == chosen ? 1 : 0);
      for (int p = 0; p < n_feat; ++p)
        out << "," << (p == 0 ? indiv : rng.uniform(-5, 5));
      out << "\n";
    }
  }
  return load_long(table_from(out.str()));
}

}  // namespace

TEST_CASE("load_long round-trips a tiny four-alternative file") {
  auto ds = load_long(table_from(
      "obs_id,person_id,alt,chosen,tt\n"
      "1,7,Car,0,10\n"
      "1,7,Walk,0,30\n"
      "1,7,Bike,0,15\n"
      "1,7,PT,1,20\n"));
  REQUIRE(ds.n_obs == 1);
  REQUIRE(ds.n_alts == 4);
  REQUIRE(ds.chosen[0] == ds.alt_index("PT"));
  REQUIRE(ds.x(0, ds.alt_index("Walk"), 0) == 30.0);
  REQUIRE(ds.person_id[0] == 7);
}

TEST_CASE("load_long rejects malformed files with named locations") {
  SECTION("two chosen rows") {
    REQUIRE_THROWS_WITH(load_long(table_from("obs_id,person_id,alt,chosen,tt\n"
                                             "7,1,Car,1,10\n"
                                             "7,1,Walk,1,30\n")),
                        Catch::Matchers::ContainsSubstring("obs 7"));
  }
  SECTION("no chosen row") {
    REQUIRE_THROWS_WITH(load_long(table_from("obs_id,person_id,alt,chosen,tt\n"
                                             "3,1,Car,0,10\n"
                                             "3,1,Walk,0,30\n")),
                        Catch::Matchers::ContainsSubstring("obs 3"));
  }
  SECTION("duplicate (obs, alt) pair") {
    REQUIRE_THROWS_WITH(load_long(table_from("obs_id,person_id,alt,chosen,tt\n"
                                             "1,1,Car,1,10\n"
                                             "1,1,Car,0,12\n")),
                        Catch::Matchers::ContainsSubstring("duplicate"));
  }
  SECTION("non-numeric value names row and column") {
    REQUIRE_THROWS_WITH(load_long(table_from("obs_id,person_id,alt,chosen,tt\n"
                                             "1,1,Car,1,oops\n"
                                             "1,1,Walk,0,3\n")),
                        Catch::Matchers::ContainsSubstring("tt"));
  }
}

TEST_CASE("load_long accepts generated well-formed files") {
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    int n = 1 + static_cast<int>(rng.below(12));
    int k = 2 + static_cast<int>(rng.below(3));
    int p = 1 + static_cast<int>(rng.below(3));
    REQUIRE_NOTHROW(random_dataset(rng, n, k, p));
  }
}

TEST_CASE("to_wide column counting") {
  SECTION("one alternative-varying + one individual feature, K=4 -> 5 columns") {
    auto ds = load_long(table_from(
        "obs_id,person_id,alt,chosen,tt,income\n"
        "1,1,Car,1,10,55\n1,1,Walk,0,30,55\n1,1,Bike,0,15,55\n1,1,PT,0,20,55\n"
        "2,2,Car,0,12,40\n2,2,Walk,0,22,40\n2,2,Bike,0,11,40\n2,2,PT,1,18,40\n"));
    WideMatrix w = to_wide(ds);
    REQUIRE(w.n_cols() == 5);
    REQUIRE(w.col_index("income") >= 0);
    REQUIRE(w.col_index("tt_PT") >= 0);
    REQUIRE(w.y[1] == ds.alt_index("PT"));
  }
  SECTION("all features alternative-varying, P=2, K=3 -> 6 columns") {
    Rng rng(5);
    std::ostringstream out;
    out << "obs_id,person_id,alt,chosen,a,b\n";
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < 3; ++k)
        out << (i + 1) << "," << (i + 1) << ",alt" << k << "," << (k == i % 3 ? 1 : 0) << ","
            << rng.uniform(1, 2) << "," << rng.uniform(1, 2) << "\n";
    WideMatrix w = to_wide(load_long(table_from(out.str())));
    REQUIRE(w.n_cols() == 6);
  }
  SECTION("single-alternative feature keeps its bare name") {
    auto ds = load_long(table_from(
        "obs_id,person_id,alt,chosen,tt,wait\n"
        "1,1,Car,1,10,0\n1,1,PT,0,20,4\n"
        "2,2,Car,0,9,0\n2,2,PT,1,22,6\n"));
    WideMatrix w = to_wide(ds);
    REQUIRE(w.col_index("wait") >= 0);
    REQUIRE(w.n_cols() == 3);  // tt_Car, tt_PT, wait
  }
}

TEST_CASE("to_wide then regroup is lossless on random small datasets") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 1 + static_cast<int>(rng.below(20));
    int k = 2 + static_cast<int>(rng.below(3));
    int p = 1 + static_cast<int>(rng.below(3));
    ChoiceDataset ds = random_dataset(rng, n, k, p);
    WideMatrix w = to_wide(ds);
    Eigen::MatrixXd x(ds.n_alts, ds.n_features);
    for (int i = 0; i < ds.n_obs; ++i) {
      wide_row_to_long(w, w.Z.row(i), ds.n_features, x);
      for (int kk = 0; kk < ds.n_alts; ++kk)
        for (int pp = 0; pp < ds.n_features; ++pp)
          REQUIRE(x(kk, pp) == ds.x(i, kk, pp));
    }
  }
}

TEST_CASE("vif") {
  SECTION("independent standard-normal columns stay near 1") {
    Rng rng(7);
    auto std_normal = [&rng] { return inv_normal_cdf(std::max(rng.next_double(), 1e-12)); };
    WideMatrix w;
    w.n_alts = 2;
    w.Z.resize(10000, 2);
    for (int i = 0; i < 10000; ++i) {
      w.Z(i, 0) = std_normal();
      w.Z(i, 1) = std_normal();
    }
    w.col_names = {"a", "b"};
    auto v = vif(w);
    REQUIRE(v[0] >= 1.0);
    REQUIRE(v[0] <= 1.1);
    REQUIRE(v[1] >= 1.0);
    REQUIRE(v[1] <= 1.1);
  }
  SECTION("exact linear combination reports +inf") {
    WideMatrix w;
    w.n_alts = 2;
    w.Z.resize(50, 3);
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
      w.Z(i, 0) = rng.uniform(0, 1);
      w.Z(i, 1) = rng.uniform(0, 1);
      w.Z(i, 2) = w.Z(i, 0) + w.Z(i, 1);
    }
    w.col_names = {"a", "b", "c"};
    auto v = vif(w);
    REQUIRE(std::isinf(v[2]));
  }
  SECTION("orthogonal design gives exactly 1") {
    WideMatrix w;
    w.n_alts = 2;
    w.Z.resize(4, 2);
    w.Z << 1, 1, 1, -1, -1, 1, -1, -1;  // orthogonal, zero correlation
    w.col_names = {"a", "b"};
    auto v = vif(w);
    REQUIRE(v[0] == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(v[1] == Catch::Approx(1.0).margin(1e-9));
  }
  SECTION("constant column is rejected") {
    WideMatrix w;
    w.n_alts = 2;
    w.Z = Eigen::MatrixXd::Ones(10, 2);
    w.Z.col(0) = Eigen::VectorXd::LinSpaced(10, 0, 1);
    w.col_names = {"a", "b"};
    REQUIRE_THROWS_AS(vif(w), validation_error);
  }
}

TEST_CASE("kfold_split") {
  SECTION("n=10, k=10 gives singleton folds") {
    auto fa = kfold_split(10, 10, 1);
    for (int f = 0; f < 10; ++f) REQUIRE(fa.fold_indices(f).size() == 1);
  }
  SECTION("n=8141, k=10 gives nine folds of 814 and one of 815") {
    auto fa = kfold_split(8141, 10, 123);
    int n814 = 0, n815 = 0, covered = 0;
    for (int f = 0; f < 10; ++f) {
      auto idx = fa.fold_indices(f);
      covered += static_cast<int>(idx.size());
      if (idx.size() == 814) ++n814;
      if (idx.size() == 815) ++n815;
    }
    REQUIRE(covered == 8141);
    REQUIRE(n814 == 9);
    REQUIRE(n815 == 1);
  }
  SECTION("deterministic under seed, disjoint, exhaustive") {
    auto a = kfold_split(137, 7, 9);
    auto b = kfold_split(137, 7, 9);
    REQUIRE(a.assignment == b.assignment);
    std::set<int> seen;
    for (int f = 0; f < 7; ++f)
      for (int i : a.fold_indices(f)) REQUIRE(seen.insert(i).second);
    REQUIRE(seen.size() == 137);
  }
  SECTION("k > n is rejected") { REQUIRE_THROWS_AS(kfold_split(3, 5, 0), validation_error); }
}

TEST_CASE("person-level folds keep individuals together") {
  std::vector<long long> persons = {1, 1, 1, 2, 2, 3, 3, 4, 5, 5, 6, 7};
  auto fa = kfold_split_persons(persons, 3, 11);
  std::map<long long, int> fold_of;
  for (std::size_t i = 0; i < persons.size(); ++i) {
    auto it = fold_of.find(persons[i]);
    if (it == fold_of.end())
      fold_of[persons[i]] = fa.assignment[i];
    else
      REQUIRE(it->second == fa.assignment[i]);
  }
}
