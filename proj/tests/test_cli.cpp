/*
 * Copyright 2026 The causal-reduce Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <string>

#include "cli_support.hpp"

namespace {

namespace fs = std::filesystem;
using namespace cli_support;

const std::string kBinary = CAUSAL_REDUCE_CLI;
const fs::path kGolden = CAUSAL_REDUCE_GOLDEN_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("causal_reduce_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Cli, SimulateMatchesGoldenFiles) {
  const fs::path dir = scratch("golden");
  ASSERT_EQ(run(kBinary + " simulate --config '" + (kGolden / "simulate.json").string() + "' --seed 2024 --out '" +
                    dir.string() + "'",
                dir / "log"),
            0);
  EXPECT_EQ(read_file(dir / "dataset.csv"), read_file(kGolden / "dataset.csv"));
  EXPECT_EQ(read_file(dir / "dataset.json"), read_file(kGolden / "dataset.json"));
}

TEST(Cli, RerunsAreByteIdentical) {
  const auto failures = check_determinism(kBinary, fs::temp_directory_path() / "causal_reduce_cli_determinism");
  for (const auto& f : failures) ADD_FAILURE() << f;
}

TEST(Cli, MissingFieldIsAUsageError) {
  const fs::path dir = scratch("missing");
  write_file(dir / "sim.json", R"({"confounders": 0})");
  EXPECT_EQ(run(kBinary + " simulate --config '" + (dir / "sim.json").string() + "' --out '" + (dir / "out").string() + "'",
                dir / "log"),
            2);
  EXPECT_NE(read_file(dir / "log").find("'latent'"), std::string::npos);
  const std::string manifest = read_file(dir / "out" / "manifest.json");
  EXPECT_NE(manifest.find("\"exit_code\": 2"), std::string::npos);
  EXPECT_NE(manifest.find("missing field 'latent'"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("codes");
  write_file(dir / "bad.csv", "regime,x,y\nobs,1,oops\n");
  EXPECT_EQ(run(kBinary + " fit --mode linear --data '" + (dir / "bad.csv").string() + "' --out '" + (dir / "a").string() + "'",
                dir / "log"),
            3);
  EXPECT_NE(read_file(dir / "a" / "manifest.json").find("line 2"), std::string::npos);

  EXPECT_EQ(run(kBinary + " fit --mode nonsense --data x.csv --out '" + (dir / "b").string() + "'", dir / "log"), 2);
  EXPECT_EQ(run(kBinary + " no-such-command", dir / "log"), 2);
  EXPECT_EQ(run(kBinary + " eval-flow --data x.csv", dir / "log"), 2);

  // Jitter far below machine precision makes the GP factorization fail.
  write_file(dir / "nj.json", R"({"latent": 1, "confounders": 0, "hidden": 8, "jitter": 1e-300,
 "obs_splits": {"train": 300, "validation": 0, "test": 0}, "int_splits": {"train": 300, "validation": 0, "test": 0}})");
  EXPECT_EQ(run(kBinary + " simulate --config '" + (dir / "nj.json").string() + "' --out '" + (dir / "c").string() + "'",
                dir / "log"),
            4);
  EXPECT_NE(read_file(dir / "c" / "manifest.json").find("\"exit_code\": 4"), std::string::npos);
}

TEST(Cli, SeedFlagOverridesConfig) {
  const fs::path dir = scratch("seed");
  write_file(dir / "sim.json", R"({"latent": 1, "confounders": 0, "hidden": 8, "seed": 5,
 "obs_splits": {"train": 20, "validation": 0, "test": 0}, "int_splits": {"train": 20, "validation": 0, "test": 0}})");
  const std::string cfg = " simulate --config '" + (dir / "sim.json").string() + "'";
  ASSERT_EQ(run(kBinary + cfg + " --out '" + (dir / "a").string() + "'", dir / "log"), 0);
  ASSERT_EQ(run(kBinary + cfg + " --seed 5 --out '" + (dir / "b").string() + "'", dir / "log"), 0);
  ASSERT_EQ(run(kBinary + cfg + " --seed 6 --out '" + (dir / "c").string() + "'", dir / "log"), 0);
  EXPECT_EQ(read_file(dir / "a" / "dataset.csv"), read_file(dir / "b" / "dataset.csv"));
  EXPECT_NE(read_file(dir / "a" / "dataset.csv"), read_file(dir / "c" / "dataset.csv"));
}

}  // namespace
