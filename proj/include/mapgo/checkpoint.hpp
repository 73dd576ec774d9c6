#pragma once

// Binary checkpoint container. Layout (little-endian, see docs/checkpoint-format.md):
//
//   "MAPGOCKP"  u32 version  u64 header_len  header_json[header_len]
//   u32 record_count  then per record:
//     u32 name_len  name  u32 kind
//     kind 1 (mlp):          u32 n_sizes  u32 sizes[n_sizes]  u32 activation  u64 n  f64 params[n]
//     kind 2 (vector):       u64 n  f64 values[n]
//     kind 3 (trajectories): u64 count, per trajectory: u64 id  vec goal  u32 L,
//                            per transition: vec s  vec a  vec s'  vec g  f64 r  u32 step
//   where vec := u32 dim  f64 values[dim]

#include "mapgo/gomdp.hpp"
#include "mapgo/nn.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mapgo {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::map<std::string, nn::Mlp> networks;
  std::map<std::string, Vector> vectors;
  std::map<std::string, std::vector<Trajectory>> trajectories;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  const nn::Mlp& network(const std::string& name) const;
  const Vector& vector(const std::string& name) const;
};

}  // namespace mapgo
