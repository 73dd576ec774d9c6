#include "mapgo/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace mapgo {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'A', 'P', 'G', 'O', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

enum class RecordKind : std::uint32_t { Network = 1, Vector = 2, Trajectories = 3 };

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  }

  template <class T>
  void pod(const T& value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  void bytes(const void* data, std::size_t n) { out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }

  void string(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  void doubles(const Vector& v) { bytes(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double)); }

  void vec(const Vector& v) {
    pod(static_cast<std::uint32_t>(v.size()));
    doubles(v);
  }

  void finish() {
    out_.flush();
    if (!out_) throw CheckpointError("checkpoint write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw CheckpointError("cannot open checkpoint: " + path.string());
  }

  template <class T>
  T pod() {
    T value{};
    read(&value, sizeof(T));
    return value;
  }

  void read(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in_) throw CheckpointError("truncated checkpoint");
  }

  std::string string() {
    const auto n = pod<std::uint32_t>();
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  Vector doubles(std::uint64_t n) {
    Vector v(static_cast<Eigen::Index>(n));
    read(v.data(), n * sizeof(double));
    return v;
  }

  Vector vec() { return doubles(pod<std::uint32_t>()); }

 private:
  std::ifstream in_;
};

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  Writer w(path);
  w.bytes(kMagic, sizeof(kMagic));
  w.pod(kVersion);
  const std::string head = header.dump();
  w.pod(static_cast<std::uint64_t>(head.size()));
  w.bytes(head.data(), head.size());
  w.pod(static_cast<std::uint32_t>(networks.size() + vectors.size() + trajectories.size()));

  for (const auto& [name, net] : networks) {
    w.string(name);
    w.pod(RecordKind::Network);
    w.pod(static_cast<std::uint32_t>(net.sizes().size()));
    for (int s : net.sizes()) w.pod(static_cast<std::uint32_t>(s));
    w.pod(static_cast<std::uint32_t>(net.output_activation()));
    w.pod(static_cast<std::uint64_t>(net.num_parameters()));
    w.doubles(net.parameters());
  }
  for (const auto& [name, v] : vectors) {
    w.string(name);
    w.pod(RecordKind::Vector);
    w.pod(static_cast<std::uint64_t>(v.size()));
    w.doubles(v);
  }
  for (const auto& [name, trajs] : trajectories) {
    w.string(name);
    w.pod(RecordKind::Trajectories);
    w.pod(static_cast<std::uint64_t>(trajs.size()));
    for (const auto& traj : trajs) {
      w.pod(static_cast<std::uint64_t>(traj.id));
      w.vec(traj.behavioral_goal);
      w.pod(static_cast<std::uint32_t>(traj.transitions.size()));
      for (const auto& t : traj.transitions) {
        w.vec(t.state);
        w.vec(t.action);
        w.vec(t.next_state);
        w.vec(t.goal);
        w.pod(t.reward);
        w.pod(static_cast<std::uint32_t>(t.step_index));
      }
    }
  }
  w.finish();
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  Reader r(path);
  char magic[sizeof(kMagic)];
  r.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw CheckpointError("not a mapgo checkpoint: " + path.string());
  if (r.pod<std::uint32_t>() != kVersion) throw CheckpointError("unsupported checkpoint version");

  Checkpoint ckpt;
  const auto head_len = r.pod<std::uint64_t>();
  std::string head(head_len, '\0');
  r.read(head.data(), head_len);
  ckpt.header = nlohmann::json::parse(head);

  const auto records = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < records; ++i) {
    std::string name = r.string();
    switch (r.pod<RecordKind>()) {
      case RecordKind::Network: {
        std::vector<int> sizes(r.pod<std::uint32_t>());
        for (auto& s : sizes) s = static_cast<int>(r.pod<std::uint32_t>());
        const auto act = static_cast<nn::OutputActivation>(r.pod<std::uint32_t>());
        nn::Mlp net(std::move(sizes), act);
        const auto n = r.pod<std::uint64_t>();
        if (static_cast<Eigen::Index>(n) != net.num_parameters()) throw CheckpointError("network record size mismatch");
        net.parameters() = r.doubles(n);
        ckpt.networks.emplace(std::move(name), std::move(net));
        break;
      }
      case RecordKind::Vector:
        ckpt.vectors.emplace(std::move(name), r.doubles(r.pod<std::uint64_t>()));
        break;
      case RecordKind::Trajectories: {
        std::vector<Trajectory> trajs(r.pod<std::uint64_t>());
        for (auto& traj : trajs) {
          traj.id = r.pod<std::uint64_t>();
          traj.behavioral_goal = r.vec();
          traj.transitions.resize(r.pod<std::uint32_t>());
          for (auto& t : traj.transitions) {
            t.state = r.vec();
            t.action = r.vec();
            t.next_state = r.vec();
            t.goal = r.vec();
            t.reward = r.pod<double>();
            t.step_index = static_cast<int>(r.pod<std::uint32_t>());
            t.trajectory_id = traj.id;
          }
        }
        ckpt.trajectories.emplace(std::move(name), std::move(trajs));
        break;
      }
      default:
        throw CheckpointError("unknown checkpoint record kind");
    }
  }
  return ckpt;
}

const nn::Mlp& Checkpoint::network(const std::string& name) const {
  auto it = networks.find(name);
  if (it == networks.end()) throw CheckpointError("checkpoint has no network '" + name + "'");
  return it->second;
}

const Vector& Checkpoint::vector(const std::string& name) const {
  auto it = vectors.find(name);
  if (it == vectors.end()) throw CheckpointError("checkpoint has no vector '" + name + "'");
  return it->second;
}

}  // namespace mapgo
