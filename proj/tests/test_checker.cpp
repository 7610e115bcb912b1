#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "generators.hpp"
#include "oracle.hpp"
#include "pclab/checker.hpp"

using namespace pclab;

namespace {

OperationId id(ProcId p, std::size_t i) { return OperationId{p, 0, i}; }

PartitionSpec partition(const Computation& c, Model m) { return model_partition(ModelName{m, {}}, VariableUsage::of(c)); }

// p: r(x)=1, w(y,2); q: r(y)=2, w(x,1)
Computation cyclic() {
  Computation c;
  c.add(0, 0, op::Read{"x", 1});
  c.add(0, 0, op::Write{"y", 2});
  c.add(1, 0, op::Read{"y", 2});
  c.add(1, 0, op::Write{"x", 1});
  return c;
}

// p: w(x,1), r(y)=0; q: w(y,1), r(x)=0
Computation store_buffering() {
  Computation c;
  c.add(0, 0, op::Write{"x", 1});
  c.add(0, 0, op::Read{"y", 0});
  c.add(1, 0, op::Write{"y", 1});
  c.add(1, 0, op::Read{"x", 0});
  return c;
}

}  // namespace

TEST_CASE("check_pc examples") {
  SUBCASE("cyclic computation under P-RAM and PC-G") {
    Computation c = cyclic();
    for (Model m : {Model::pram, Model::pcg}) {
      auto v = check_pc(c, partition(c, m));
      REQUIRE(v.satisfied());
      CHECK(verify_pc(c, partition(c, m), *v.witnesses));
    }
  }
  SUBCASE("empty computation") {
    Computation c;
    auto v = check_pc(c, PartitionSpec{});
    CHECK(v.satisfied());
    REQUIRE(v.witnesses);
    CHECK(v.witnesses->views.empty());
  }
  SUBCASE("store buffering") {
    Computation c = store_buffering();
    PartitionSpec sc{{{"x", "y"}}, {"x", "y"}};
    PartitionSpec none{{}, {"x", "y"}};
    // frozen from the enumeration oracle
    CHECK_FALSE(oracle::pc(c, sc));
    CHECK(oracle::pc(c, none));
    CHECK_FALSE(check_pc(c, sc).satisfied());
    CHECK_FALSE(check_pc(c, sc).witnesses);
    CHECK(check_pc(c, none).satisfied());
  }
  SUBCASE("non read/write operation is a domain error") {
    Computation c;
    c.add(0, 0, op::Send{0, 1, "m"});
    CHECK_THROWS_AS(check_pc(c, PartitionSpec{}), DomainError);
  }
  SUBCASE("read of a value nobody writes") {
    Computation c;
    c.add(0, 0, op::Read{"x", 9});
    CHECK_FALSE(check_pc(c, PartitionSpec{}).satisfied());
  }
  SUBCASE("witness view domains") {
    Computation c = store_buffering();
    auto v = check_pc(c, PartitionSpec{});
    REQUIRE(v.witnesses);
    for (const auto& [p, seq] : v.witnesses->views) CHECK(seq.size() == 3);
  }
}

TEST_CASE("check_pob examples") {
  SUBCASE("empty computation") { CHECK(check_pob(Computation{}, {}).satisfied()); }
  SUBCASE("delivery missing at another process") {
    Computation c;
    c.add(0, 0, op::Bcast{"u", Label{1}});
    c.add(0, 0, op::Deliver{"u", Label{1}});
    c.declare_thread(1, 0);
    CHECK_FALSE(check_pob(c, {Label{1}}).satisfied());
  }
  SUBCASE("disagreeing label-1 deliveries") {
    Computation c;
    c.add(0, 0, op::Bcast{"u1", Label{1}});
    c.add(0, 0, op::Deliver{"u1", Label{1}});
    c.add(0, 0, op::Deliver{"u2", Label{1}});
    c.add(1, 0, op::Bcast{"u2", Label{1}});
    c.add(1, 0, op::Deliver{"u2", Label{1}});
    c.add(1, 0, op::Deliver{"u1", Label{1}});
    CHECK_FALSE(oracle::pob(c, {Label{1}}));
    CHECK_FALSE(check_pob(c, {Label{1}}).satisfied());

    // unlabeled deliveries need no agreement
    Computation d;
    d.add(0, 0, op::Bcast{"u1", Label::none()});
    d.add(0, 0, op::Deliver{"u1", Label::none()});
    d.add(0, 0, op::Deliver{"u2", Label::none()});
    d.add(1, 0, op::Bcast{"u2", Label::none()});
    d.add(1, 0, op::Deliver{"u2", Label::none()});
    d.add(1, 0, op::Deliver{"u1", Label::none()});
    CHECK(oracle::pob(d, {}));
    auto v = check_pob(d, {});
    REQUIRE(v.satisfied());
    CHECK(verify_pob(d, {}, *v.witnesses));
  }
  SUBCASE("deliver of an update never broadcast is a false verdict") {
    Computation c;
    c.add(0, 0, op::Deliver{"u", Label{1}});
    CHECK_FALSE(check_pob(c, {Label{1}}).satisfied());
  }
  SUBCASE("labels outside the set and network operations are rejected") {
    Computation c;
    c.add(0, 0, op::Bcast{"u", Label{2}});
    CHECK_THROWS_AS(check_pob(c, {Label{1}}), DomainError);
    Computation d;
    d.add(0, 0, op::Recv{1, 0, "m"});
    CHECK_THROWS_AS(check_pob(d, {}), DomainError);
  }
}

TEST_CASE("del_order") {
  SUBCASE("single bcast and deliver") {
    Computation c;
    c.add(0, 0, op::Bcast{"u", Label{1}});
    c.add(0, 0, op::Deliver{"u", Label{1}});
    CHECK(del_order(c).pairs().empty());
  }
  SUBCASE("program-ordered bcasts order deliveries") {
    Computation c;
    c.add(0, 0, op::Bcast{"u1", Label{1}});
    c.add(0, 0, op::Bcast{"u2", Label{1}});
    c.add(1, 0, op::Deliver{"u2", Label{1}});
    c.add(1, 0, op::Deliver{"u1", Label{1}});
    CHECK(del_order(c).contains(id(1, 1), id(1, 0)));
    CHECK(del_order(c).pairs().size() == 1);
  }
  SUBCASE("bcasts at different processes") {
    Computation c;
    c.add(0, 0, op::Bcast{"u1", Label{1}});
    c.add(1, 0, op::Bcast{"u2", Label{1}});
    c.add(2, 0, op::Deliver{"u1", Label{1}});
    c.add(2, 0, op::Deliver{"u2", Label{1}});
    CHECK(del_order(c).pairs().empty());
  }
}

TEST_CASE("causality relations") {
  SUBCASE("message order") {
    Computation c;
    c.add(0, 0, op::Send{0, 1, "m"});
    c.add(1, 0, op::Recv{0, 1, "m"});
    auto r = causality(c);
    CHECK(r.message_order.contains(id(0, 0), id(1, 0)));
    CHECK(r.happens_before.contains(id(0, 0), id(1, 0)));
  }
  SUBCASE("fifo channel") {
    Computation c;
    c.add(0, 0, op::Send{0, 1, "a"});
    c.add(0, 0, op::Send{0, 1, "b"});
    c.add(1, 0, op::Recv{0, 1, "b"});
    c.add(1, 0, op::Recv{0, 1, "a"});
    auto r = causality(c);
    CHECK(r.fifo_channel.contains(id(1, 1), id(1, 0)));
    CHECK_FALSE(happens_before_acyclic(c));
    CHECK_FALSE(check_nw(c).satisfied());
  }
  SUBCASE("writes into") {
    Computation c;
    c.add(0, 0, op::Write{"x", 5});
    c.add(0, 0, op::Read{"x", 5});
    CHECK(causality(c).writes_into.contains(id(0, 0), id(0, 1)));
  }
  SUBCASE("duplicate message id") {
    Computation c;
    c.add(0, 0, op::Send{0, 1, "m"});
    c.add(1, 0, op::Send{1, 0, "m"});
    CHECK_THROWS_AS(causality(c), DomainError);
  }
  SUBCASE("happens-before is the closure of the generators") {
    std::mt19937 rng(21);
    for (int trial = 0; trial < 100; ++trial) {
      Computation c = gen::network(rng, 3, 8);
      auto r = causality(c);
      OrderRelation u = program_order(c);
      for (const auto* rel : {&r.message_order, &r.fifo_channel, &r.writes_into})
        for (const auto& [a, b] : rel->pairs()) u.add(a, b);
      CHECK(u.closure().pairs() == r.happens_before.pairs());
      CHECK(happens_before_acyclic(c) == r.happens_before.is_acyclic());
    }
  }
}

TEST_CASE("check_nw examples") {
  SUBCASE("cross receive before send") {
    Computation c;
    c.add(0, 0, op::Recv{1, 0, "m1"});
    c.add(0, 0, op::Send{0, 1, "m2"});
    c.add(1, 0, op::Recv{0, 1, "m2"});
    c.add(1, 0, op::Send{1, 0, "m1"});
    CHECK_FALSE(check_nw(c).satisfied());
  }
  SUBCASE("single send and receive") {
    Computation c;
    c.add(0, 0, op::Send{0, 1, "m"});
    c.add(1, 0, op::Recv{0, 1, "m"});
    auto v = check_nw(c);
    REQUIRE(v.satisfied());
    CHECK(verify_nw(c, *v.witnesses));
  }
  SUBCASE("send without receive") {
    Computation c;
    c.add(0, 0, op::Send{0, 1, "m"});
    c.declare_thread(1, 0);
    CHECK_FALSE(check_nw(c).satisfied());
  }
  SUBCASE("broadcast operations are rejected") {
    Computation c;
    c.add(0, 0, op::Bcast{"u", Label{1}});
    CHECK_THROWS_AS(check_nw(c), DomainError);
  }
}

TEST_CASE("witness_search") {
  Computation c;
  c.add(0, 0, op::Write{"x", 1});
  c.add(0, 0, op::Read{"x", 1});
  c.add(0, 0, op::Write{"x", 2});
  SUBCASE("total valid base is returned unchanged") {
    SearchView v{0, {id(0, 2), id(0, 0), id(0, 1)}, {{id(0, 0), id(0, 1)}, {id(0, 1), id(0, 2)}}, {}};
    auto r = witness_search(c, std::span(&v, 1), {});
    REQUIRE(r.status == SearchResult::Status::found);
    CHECK(r.witnesses->views.at(0) == std::vector<OperationId>{id(0, 0), id(0, 1), id(0, 2)});
  }
  SUBCASE("cyclic base") {
    SearchView v{0, {id(0, 0), id(0, 1)}, {{id(0, 0), id(0, 1)}, {id(0, 1), id(0, 0)}}, {}};
    CHECK(witness_search(c, std::span(&v, 1), {}).status == SearchResult::Status::none);
  }
  SUBCASE("budget exhaustion is reported") {
    SearchView v{0, {id(0, 0), id(0, 1), id(0, 2)}, {}, {}};
    SearchOptions opts;
    opts.node_budget = 1;
    CHECK(witness_search(c, std::span(&v, 1), {}, opts).status == SearchResult::Status::budget_exhausted);
    CheckOptions co;
    co.search.node_budget = 1;
    CHECK(check_pc(store_buffering(), PartitionSpec{{{"x", "y"}}, {"x", "y"}}, co).undecided());
  }
  SUBCASE("deterministic") {
    Computation sb = store_buffering();
    CHECK(check_pc(sb, PartitionSpec{}).witnesses == check_pc(sb, PartitionSpec{}).witnesses);
  }
}

TEST_CASE("model partitions") {
  Computation c;
  c.add(0, 0, op::Write{"x", 1});
  c.add(0, 0, op::Write{"y", 1});
  c.add(1, 0, op::Write{"y", 2});
  auto u = VariableUsage::of(c);
  CHECK(model_partition({Model::sc, {}}, u).classes == std::vector<std::set<std::string>>{{"x", "y"}});
  CHECK(model_partition({Model::pram, {}}, u).classes.empty());
  CHECK(model_partition({Model::pcg, {}}, u).classes == std::vector<std::set<std::string>>{{"x"}, {"y"}});
  CHECK(model_partition({Model::weaksc, {}}, u).classes == std::vector<std::set<std::string>>{{"y"}});
  CHECK(model_partition({Model::weakpcg, {}}, u).classes == std::vector<std::set<std::string>>{{"y"}});
  CHECK(ModelName::parse("pcg").kind == Model::pcg);
  CHECK(ModelName::parse("weaksc").str() == "weaksc");
  CHECK_THROWS_AS(ModelName::parse("tso"), DomainError);
}

TEST_CASE("multi_writer_vars") {
  Computation a;
  a.add(0, 0, op::Write{"x", 1});
  a.add(1, 0, op::Write{"x", 2});
  CHECK(multi_writer_vars(VariableUsage::of(a)) == std::set<std::string>{"x"});
  Computation b;
  b.add(0, 0, op::Write{"x", 1});
  b.add(0, 0, op::Write{"x", 2});
  CHECK(multi_writer_vars(VariableUsage::of(b)).empty());
  Computation r;
  r.add(0, 0, op::Read{"x", 0});
  CHECK(multi_writer_vars(VariableUsage::of(r)).empty());
}

TEST_CASE("search agrees with enumeration on small computations") {
  std::mt19937 rng(2024);
  int sat = 0, unsat = 0;
  for (int trial = 0; trial < 150; ++trial) {
    Computation c = gen::read_write(rng, 3, 7, 2);
    for (Model m : {Model::sc, Model::pram, Model::pcg, Model::weaksc}) {
      auto k = partition(c, m);
      auto v = check_pc(c, k);
      CHECK(v.satisfied() == oracle::pc(c, k));
      (v.satisfied() ? sat : unsat)++;
      if (v.satisfied()) CHECK(verify_pc(c, k, *v.witnesses));
    }
    Computation b = gen::bcast_deliver(rng, 3, 7);
    std::set<Label> ls{Label{1}, Label{2}};
    auto vb = check_pob(b, ls);
    CHECK(vb.satisfied() == oracle::pob(b, ls));
    if (vb.satisfied()) CHECK(verify_pob(b, ls, *vb.witnesses));

    Computation n = gen::network(rng, 3, 7);
    auto vn = check_nw(n);
    CHECK(vn.satisfied() == oracle::nw(n));
    if (vn.satisfied()) CHECK(verify_nw(n, *vn.witnesses));
  }
  CHECK(sat > 50);
  CHECK(unsat > 50);
}

TEST_CASE("model lattice and partition invariants") {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 150; ++trial) {
    Computation c = gen::read_write(rng, 3, 7, 3);
    bool sc = check_pc(c, partition(c, Model::sc)).satisfied();
    bool wsc = check_pc(c, partition(c, Model::weaksc)).satisfied();
    bool pcg = check_pc(c, partition(c, Model::pcg)).satisfied();
    bool pram = check_pc(c, partition(c, Model::pram)).satisfied();
    CHECK((!sc || wsc));
    CHECK((!wsc || pcg));
    CHECK((!pcg || pram));

    // dropping classes only weakens the predicate
    PartitionSpec k = partition(c, Model::pcg);
    bool full = pcg;
    auto usage = VariableUsage::of(c);
    for (std::size_t drop = 0; drop < k.classes.size(); ++drop) {
      PartitionSpec smaller = k;
      smaller.classes.erase(smaller.classes.begin() + static_cast<std::ptrdiff_t>(drop));
      bool weaker = check_pc(c, smaller).satisfied();
      if (full) CHECK(weaker);
      const std::string& var = *k.classes[drop].begin();
      auto w = usage.writers.find(var);
      if (w == usage.writers.end() || w->second.size() <= 1) CHECK(weaker == full);
    }
  }
}

TEST_CASE("verdict formatting") {
  Computation c = store_buffering();
  auto text = format_verdict(c, check_pc(c, PartitionSpec{}));
  CHECK(text.rfind("verdict satisfied\n", 0) == 0);
  CHECK(text.find("view 0") != std::string::npos);
  CHECK(format_verdict(c, check_pc(c, PartitionSpec{{{"x", "y"}}, {"x", "y"}})).rfind("verdict unsatisfied", 0) == 0);
}
