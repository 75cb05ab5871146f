// Copyright 2026 The cfsearch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>

#include "cfsearch/error.hpp"
#include "cfsearch/search_space.hpp"
#include "brute_force.hpp"
#include "test_support.hpp"

using namespace cfsearch;

using testing::Member;
using testing::brute_force_specializations;

TEST_CASE("specialization counts match brute force for M, L in 1..3") {
  for (std::size_t M = 1; M <= 3; ++M) {
    for (std::size_t L = 1; L <= 3; ++L) {
      CAPTURE(M);
      CAPTURE(L);
      const auto brute = brute_force_specializations(M, L);
      const auto listed = enumerate_specializations(M, L);
      CHECK(operator_specialization_count(M, L) == brute.size());
      CHECK(listed.size() == brute.size());
      std::set<Member> as_sets;
      for (const auto& s : listed) {
        REQUIRE(s.size() == M);
        for (std::size_t l = 0; l < L; ++l) {
          std::set<std::size_t> seen;
          for (const auto& a : s) seen.insert(a[l]);
          CHECK(seen.size() == M);
        }
        as_sets.insert(Member(s.begin(), s.end()));
      }
      CHECK(as_sets.size() == listed.size());  // no duplicates
      CHECK(as_sets == brute);
    }
  }
  CHECK(operator_specialization_count(2, 2) == 2);
  CHECK(operator_specialization_count(3, 2) == 6);
  CHECK(operator_specialization_count(3, 3) == 36);
  CHECK(operator_specialization_count(3, 4) == 216);
}

TEST_CASE("specialization count errors") {
  CHECK_THROWS_AS(operator_specialization_count(0, 3), ConfigError);
  CHECK_THROWS_AS(operator_specialization_count(21, 3), OverflowError);
  CHECK_THROWS_AS(enumerate_specializations(6, 6, 1000), EnumerationTooLarge);
}

TEST_CASE("genome text round trip") {
  const SupernetSpec spec = testing::default_spec();
  for (const Genome& g : enumerate_genomes(spec)) {
    if ((g.channels[0] + g.operators[1]) % 97 != 0) continue;
    CHECK(parse_genome(to_string(g)) == g);
  }
  Genome r{1, {0, 1}, {1, 0}, {2, 0}};
  CHECK(to_string(r) == "path:1;ops:0,1;ch:1,0;rec:2,0");
  CHECK(parse_genome("path:1;ops:0,1;ch:1,0;rec:2,0") == r);
  CHECK_THROWS_AS(parse_genome("path:x;ops:0;ch:0"), ConfigError);
}

TEST_CASE("genome validation names the offending field") {
  const SupernetSpec spec = testing::default_spec();
  Genome g = widest_genome(spec, 0, {0, 0, 0, 0});
  CHECK(validate_genome(spec, g));
  Genome bad = g;
  bad.path = 3;
  CHECK(validate_genome(spec, bad).reason.find("path_index") != std::string::npos);
  bad = g;
  bad.operators.pop_back();
  CHECK(validate_genome(spec, bad).reason.find("operator list length") != std::string::npos);
  bad = g;
  bad.channels[2] = 4;
  CHECK(validate_genome(spec, bad).reason.find("layer 2") != std::string::npos);
  CHECK_THROWS_AS(require_valid(spec, bad), ValidationError);
}

TEST_CASE("genome space size counts the enumeration") {
  const SupernetSpec spec = testing::default_spec();
  const auto all = enumerate_genomes(spec);
  CHECK(all.size() == 3u * 81u * 256u);
  CHECK(genome_space_size(spec) == all.size());
  CHECK(std::is_sorted(all.begin(), all.end()));
  CHECK(std::set<Genome>(all.begin(), all.end()).size() == all.size());
  CHECK(enumerate_paths(spec) == std::vector<std::size_t>{0, 1, 2});
  CHECK(genome_space_size(testing::spec_256()) == 256);
}

TEST_CASE("spec json round trip and config errors") {
  const SupernetSpec spec = testing::default_spec();
  const SupernetSpec again = spec_from_json(spec_to_json(spec));
  CHECK(spec_to_json(again) == spec_to_json(spec));
  CHECK(spec.paths[1].resolution_schedule == std::vector<int>{-1, -1, 0, 0});
  CHECK(parse_scale("1/2") == -1);
  CHECK(parse_scale("4") == 2);
  CHECK_THROWS_AS(parse_scale("3"), ConfigError);

  auto j = spec_to_json(spec);
  j["paths"][0]["layers"][0]["operators"] = {"conv3x3", "nope", "dwsblock"};
  CHECK_THROWS_AS(spec_from_json(j), ConfigError);
  j = spec_to_json(spec);
  j["channel_choices"] = {4, 2};
  CHECK_THROWS_AS(spec_from_json(j), ConfigError);
  j = spec_to_json(spec);
  j["paths"][0]["resolution_schedule"] = {"1", "1"};
  CHECK_THROWS_AS(spec_from_json(j), ConfigError);
}

TEST_CASE("discriminator matching is injective") {
  const SupernetSpec spec = testing::default_spec();
  std::set<std::size_t> used;
  for (const auto& p : spec.paths) used.insert(p.matched_discriminator_path);
  CHECK(used.size() == spec.num_paths());
}
