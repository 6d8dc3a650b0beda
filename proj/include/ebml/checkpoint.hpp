#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ebml/config.hpp"
#include "ebml/errors.hpp"
#include "ebml/trainer.hpp"

namespace ebml {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

// Binary container of named float64 arrays:
//   magic 'EBLC', u32 version, u64 config hash, u32 record count,
//   records (u32 name length, name bytes, u32 ndim, u64 dims, f64 data),
//   u64 FNV-1a checksum of all preceding bytes.
class Checkpoint {
 public:
  struct Array {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::vector<double> data;
  };

  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t config_hash = 0;
  std::vector<Array> arrays;

  void add(std::string name, std::vector<std::uint64_t> shape, std::vector<double> data) {
    std::uint64_t total = 1;
    for (auto d : shape) total *= d;
    if (total != data.size()) throw ShapeError("checkpoint array shape mismatch: " + name);
    arrays.push_back({std::move(name), std::move(shape), std::move(data)});
  }

  void add_scalar(std::string name, double value) {
    add(std::move(name), {1}, {value});
  }

  const Array* find(std::string_view name) const {
    for (const auto& a : arrays) {
      if (a.name == name) return &a;
    }
    return nullptr;
  }

  const Array& require(std::string_view name) const {
    const Array* a = find(name);
    if (!a) throw CheckpointError("checkpoint misses array: " + std::string(name));
    return *a;
  }

  double scalar(std::string_view name) const { return require(name).data.at(0); }

  bool has(std::string_view name) const { return find(name) != nullptr; }

  void save(const std::string& path) const {
    std::string bytes;
    auto put_u32 = [&](std::uint32_t v) { bytes.append(reinterpret_cast<const char*>(&v), 4); };
    auto put_u64 = [&](std::uint64_t v) { bytes.append(reinterpret_cast<const char*>(&v), 8); };
    bytes.append("EBLC", 4);
    put_u32(kVersion);
    put_u64(config_hash);
    put_u32(static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
      put_u32(static_cast<std::uint32_t>(a.name.size()));
      bytes.append(a.name);
      put_u32(static_cast<std::uint32_t>(a.shape.size()));
      for (auto d : a.shape) put_u64(d);
      bytes.append(reinterpret_cast<const char*>(a.data.data()), a.data.size() * 8);
    }
    const std::uint64_t checksum = fnv1a(bytes);
    bytes.append(reinterpret_cast<const char*>(&checksum), 8);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("short write to checkpoint: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot read checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    if (bytes.size() < 20) throw CheckpointError("checkpoint truncated: " + path);

    const std::uint64_t stored_checksum = read_u64(bytes, bytes.size() - 8);
    if (fnv1a(std::string_view(bytes).substr(0, bytes.size() - 8)) != stored_checksum)
      throw CheckpointError("checkpoint checksum mismatch (corrupt or truncated): " + path);

    std::size_t pos = 0;
    if (bytes.compare(0, 4, "EBLC") != 0)
      throw CheckpointError("bad checkpoint magic: " + path);
    pos += 4;
    const std::uint32_t version = read_u32(bytes, pos);
    pos += 4;
    if (version != kVersion)
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    ckpt.config_hash = read_u64(bytes, pos);
    pos += 8;
    const std::uint32_t count = read_u32(bytes, pos);
    pos += 4;
    for (std::uint32_t i = 0; i < count; ++i) {
      Array a;
      const std::uint32_t name_len = read_u32(bytes, pos);
      pos += 4;
      a.name = bytes.substr(pos, name_len);
      pos += name_len;
      const std::uint32_t ndim = read_u32(bytes, pos);
      pos += 4;
      std::uint64_t total = 1;
      for (std::uint32_t d = 0; d < ndim; ++d) {
        a.shape.push_back(read_u64(bytes, pos));
        pos += 8;
        total *= a.shape.back();
      }
      a.data.resize(total);
      std::memcpy(a.data.data(), bytes.data() + pos, total * 8);
      pos += total * 8;
      ckpt.arrays.push_back(std::move(a));
    }
    return ckpt;
  }

 private:
  static std::uint32_t read_u32(const std::string& b, std::size_t pos) {
    std::uint32_t v;
    std::memcpy(&v, b.data() + pos, 4);
    return v;
  }
  static std::uint64_t read_u64(const std::string& b, std::size_t pos) {
    std::uint64_t v;
    std::memcpy(&v, b.data() + pos, 8);
    return v;
  }
};

namespace ckpt_io {

inline std::vector<double> to_doubles(const std::vector<std::uint64_t>& v) {
  return {v.begin(), v.end()};
}
inline std::vector<double> to_doubles(const std::vector<std::uint8_t>& v) {
  return {v.begin(), v.end()};
}

template <typename T>
std::vector<T> from_doubles(const std::vector<double>& v) {
  std::vector<T> out;
  out.reserve(v.size());
  for (double x : v) out.push_back(static_cast<T>(x));
  return out;
}

inline std::vector<double> flatten(const Batch& batch) {
  std::vector<double> out;
  if (batch.empty()) return out;
  out.reserve(batch.size() * batch.front().size());
  for (const auto& row : batch) out.insert(out.end(), row.begin(), row.end());
  return out;
}

inline Batch unflatten(const std::vector<double>& flat, std::size_t rows, std::size_t cols) {
  Batch out(rows, std::vector<double>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i][j] = flat[i * cols + j];
  return out;
}

inline void put_net(Checkpoint& ckpt, const std::string& prefix, const DenseNet& net) {
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const Layer& layer = net.layers()[l];
    const std::string base = prefix + "/" + std::to_string(l);
    ckpt.add(base + "/w", {layer.w.rows, layer.w.cols}, layer.w.data);
    ckpt.add(base + "/b", {layer.b.size()}, layer.b);
    ckpt.add(base + "/act", {2},
             {static_cast<double>(static_cast<int>(layer.act)), layer.leak});
  }
  ckpt.add_scalar(prefix + "/layers", static_cast<double>(net.layers().size()));
}

inline DenseNet get_net(const Checkpoint& ckpt, const std::string& prefix) {
  const std::size_t n = static_cast<std::size_t>(ckpt.scalar(prefix + "/layers"));
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < n; ++l) {
    const std::string base = prefix + "/" + std::to_string(l);
    const auto& w = ckpt.require(base + "/w");
    const auto& b = ckpt.require(base + "/b");
    const auto& act = ckpt.require(base + "/act");
    Layer layer;
    layer.w = Matrix(w.shape.at(0), w.shape.at(1), w.data);
    layer.b = b.data;
    layer.act = static_cast<Activation>(static_cast<int>(act.data.at(0)));
    layer.leak = act.data.at(1);
    layers.push_back(std::move(layer));
  }
  return DenseNet(std::move(layers));
}

inline void put_generator(Checkpoint& ckpt, const std::string& prefix, const Generator& gen) {
  put_net(ckpt, prefix + "/net", gen.net());
  ckpt.add_scalar(prefix + "/recenter", gen.recenter() ? 1.0 : 0.0);
  for (std::size_t l = 0; l < gen.recenter_params().size(); ++l) {
    const auto& rp = gen.recenter_params()[l];
    const std::string base = prefix + "/rc/" + std::to_string(l);
    ckpt.add(base + "/gamma", {rp.gamma.size()}, rp.gamma);
    ckpt.add(base + "/beta", {rp.beta.size()}, rp.beta);
  }
}

inline Generator get_generator(const Checkpoint& ckpt, const std::string& prefix) {
  DenseNet net = get_net(ckpt, prefix + "/net");
  const bool recenter = ckpt.scalar(prefix + "/recenter") != 0.0;
  Generator gen(std::move(net), recenter);
  for (std::size_t l = 0; l < gen.recenter_params().size(); ++l) {
    const std::string base = prefix + "/rc/" + std::to_string(l);
    gen.recenter_params()[l].gamma = ckpt.require(base + "/gamma").data;
    gen.recenter_params()[l].beta = ckpt.require(base + "/beta").data;
  }
  return gen;
}

inline void put_adam(Checkpoint& ckpt, const std::string& prefix, const AdamState& adam) {
  ckpt.add_scalar(prefix + "/t", static_cast<double>(adam.step_count()));
  for (std::size_t i = 0; i < adam.first_moments().size(); ++i) {
    ckpt.add(prefix + "/m/" + std::to_string(i), {adam.first_moments()[i].size()},
             adam.first_moments()[i]);
    ckpt.add(prefix + "/v/" + std::to_string(i), {adam.second_moments()[i].size()},
             adam.second_moments()[i]);
  }
}

inline void get_adam(const Checkpoint& ckpt, const std::string& prefix, AdamState& adam) {
  adam.set_step_count(static_cast<std::uint64_t>(ckpt.scalar(prefix + "/t")));
  for (std::size_t i = 0; i < adam.first_moments().size(); ++i) {
    adam.first_moments()[i] = ckpt.require(prefix + "/m/" + std::to_string(i)).data;
    adam.second_moments()[i] = ckpt.require(prefix + "/v/" + std::to_string(i)).data;
  }
}

}  // namespace ckpt_io

// Serializes everything a resumed run needs to continue bit-exactly:
// parameters, optimizer moments, banks with their lifetime counters
// and draw permutations, cumulative counters, and the step position
// (randomness is keyed by seed and step, so the step is the stream
// position).
inline Checkpoint checkpoint_from_trainer(LifecycleTrainer& trainer,
                                          std::uint64_t config_hash_value) {
  using namespace ckpt_io;
  Checkpoint ckpt;
  ckpt.config_hash = config_hash_value;
  ckpt.add_scalar("meta/regime", static_cast<double>(static_cast<int>(trainer.config().regime)));
  ckpt.add_scalar("meta/dim", static_cast<double>(trainer.dataset().dim()));
  ckpt.add_scalar("meta/step", static_cast<double>(trainer.step_count()));
  ckpt.add_scalar("meta/rejuvenation_count",
                  static_cast<double>(trainer.rejuvenation_count()));
  ckpt.add_scalar("meta/promotion_count", static_cast<double>(trainer.promotion_count()));
  put_net(ckpt, "ebm", trainer.ebm_net());
  put_adam(ckpt, "adam_ebm", trainer.adam_ebm());
  put_generator(ckpt, "gen", trainer.generator());

  switch (trainer.config().regime) {
    case Regime::kShortrun: {
      put_adam(ckpt, "adam_gen", trainer.adam_gen());
      const PairedBank& bank = *trainer.paired_bank();
      ckpt.add("bank/latents", {bank.capacity(), bank.latent_dim()},
               flatten(bank.latents()));
      ckpt.add("bank/images", {bank.capacity(), bank.image_dim()}, flatten(bank.images()));
      ckpt.add("bank/update_rounds", {bank.capacity()}, to_doubles(bank.update_rounds()));
      ckpt.add("bank/lifetimes", {bank.capacity()}, to_doubles(bank.lifetimes()));
      ckpt.add("bank/rejuv_log", {bank.rejuvenation_lifetimes().size()},
               to_doubles(std::vector<std::uint64_t>(bank.rejuvenation_lifetimes().begin(),
                                                     bank.rejuvenation_lifetimes().end())));
      ckpt.add("bank/perm", {bank.perm().size()}, to_doubles(bank.perm()));
      break;
    }
    case Regime::kMidrun: {
      const PersistentBank& bank = *trainer.persistent_bank();
      ckpt.add("bank/states", {bank.capacity(), bank.dim()}, flatten(bank.slots()));
      ckpt.add("bank/lifetimes", {bank.capacity()}, to_doubles(bank.lifetimes()));
      ckpt.add("bank/rejuv_log", {bank.rejuvenation_lifetimes().size()},
               to_doubles(std::vector<std::uint64_t>(bank.rejuvenation_lifetimes().begin(),
                                                     bank.rejuvenation_lifetimes().end())));
      ckpt.add("bank/perm", {bank.perm().size()}, to_doubles(bank.perm()));
      break;
    }
    case Regime::kLongrun: {
      put_net(ckpt, "prior", *trainer.prior()->active_net());
      const DualBank& bank = *trainer.dual_bank();
      ckpt.add("bank/burn_states", {bank.burn_in_capacity(), bank.dim()},
               flatten(bank.burn_in_states()));
      ckpt.add("bank/update_states", {bank.update_capacity(), bank.dim()},
               flatten(bank.update_states()));
      ckpt.add("bank/counts", {bank.counts().size()}, to_doubles(bank.counts()));
      ckpt.add("bank/burn_lifetimes", {bank.burn_in_lifetimes().size()},
               to_doubles(bank.burn_in_lifetimes()));
      ckpt.add("bank/update_lifetimes", {bank.update_lifetimes().size()},
               to_doubles(bank.update_lifetimes()));
      ckpt.add("bank/burn_from_init", {bank.burn_from_init().size()},
               to_doubles(bank.burn_from_init()));
      ckpt.add("bank/update_from_init", {bank.update_from_init().size()},
               to_doubles(bank.update_from_init()));
      ckpt.add("bank/promo_log", {bank.promotion_lifetimes().size()},
               to_doubles(std::vector<std::uint64_t>(bank.promotion_lifetimes().begin(),
                                                     bank.promotion_lifetimes().end())));
      ckpt.add("bank/burn_perm", {bank.burn_perm().size()}, to_doubles(bank.burn_perm()));
      ckpt.add("bank/update_perm", {bank.update_perm().size()},
               to_doubles(bank.update_perm()));
      break;
    }
  }
  return ckpt;
}

inline void restore_trainer(LifecycleTrainer& trainer, const Checkpoint& ckpt) {
  using namespace ckpt_io;
  const auto regime = static_cast<Regime>(static_cast<int>(ckpt.scalar("meta/regime")));
  if (regime != trainer.config().regime)
    throw CheckpointError("checkpoint regime does not match configuration");

  trainer.ebm_net() = get_net(ckpt, "ebm");
  get_adam(ckpt, "adam_ebm", trainer.adam_ebm());
  trainer.generator() = get_generator(ckpt, "gen");
  trainer.rebuild_rejuvenation_source();
  trainer.set_counters(static_cast<std::uint64_t>(ckpt.scalar("meta/step")),
                       static_cast<std::uint64_t>(ckpt.scalar("meta/rejuvenation_count")),
                       static_cast<std::uint64_t>(ckpt.scalar("meta/promotion_count")));

  switch (regime) {
    case Regime::kShortrun: {
      get_adam(ckpt, "adam_gen", trainer.adam_gen());
      PairedBank& bank = *trainer.paired_bank();
      const auto& latents = ckpt.require("bank/latents");
      const auto& images = ckpt.require("bank/images");
      bank.restore(unflatten(latents.data, latents.shape[0], latents.shape[1]),
                   unflatten(images.data, images.shape[0], images.shape[1]),
                   from_doubles<std::uint64_t>(ckpt.require("bank/update_rounds").data),
                   from_doubles<std::uint64_t>(ckpt.require("bank/lifetimes").data),
                   from_doubles<std::uint64_t>(ckpt.require("bank/rejuv_log").data),
                   from_doubles<std::size_t>(ckpt.require("bank/perm").data));
      break;
    }
    case Regime::kMidrun: {
      PersistentBank& bank = *trainer.persistent_bank();
      const auto& states = ckpt.require("bank/states");
      bank.restore(unflatten(states.data, states.shape[0], states.shape[1]),
                   from_doubles<std::uint64_t>(ckpt.require("bank/lifetimes").data),
                   from_doubles<std::uint64_t>(ckpt.require("bank/rejuv_log").data),
                   from_doubles<std::size_t>(ckpt.require("bank/perm").data));
      break;
    }
    case Regime::kLongrun: {
      trainer.set_prior(EnergyModel::mlp(get_net(ckpt, "prior")));
      DualBank& bank = *trainer.dual_bank();
      const auto& burn = ckpt.require("bank/burn_states");
      const auto& update = ckpt.require("bank/update_states");
      bank.restore(unflatten(burn.data, burn.shape[0], burn.shape[1]),
                   unflatten(update.data, update.shape[0], update.shape[1]),
                   from_doubles<std::uint64_t>(ckpt.require("bank/counts").data),
                   from_doubles<std::uint64_t>(ckpt.require("bank/burn_lifetimes").data),
                   from_doubles<std::uint64_t>(ckpt.require("bank/update_lifetimes").data),
                   from_doubles<std::uint8_t>(ckpt.require("bank/burn_from_init").data),
                   from_doubles<std::uint8_t>(ckpt.require("bank/update_from_init").data),
                   from_doubles<std::uint64_t>(ckpt.require("bank/promo_log").data),
                   from_doubles<std::size_t>(ckpt.require("bank/burn_perm").data),
                   from_doubles<std::size_t>(ckpt.require("bank/update_perm").data));
      break;
    }
  }
}

}  // namespace ebml
