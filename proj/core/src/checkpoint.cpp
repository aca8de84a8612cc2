#include "edr/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace edr {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw data_error("checkpoint truncated while reading " + what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw data_error("checkpoint truncated while reading " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::string get_string(std::istream& is, const std::string& what) {
  const std::uint32_t len = get_u32(is, what);
  std::string s(len, '\0');
  if (len && !is.read(s.data(), len))
    throw data_error("checkpoint truncated while reading " + what);
  return s;
}

struct TensorHeader {
  std::string name;
  std::vector<std::size_t> dims;
  std::uint8_t prec_tag = 0;  // 0 = f32, 1 = f64
};

void write_section(std::ostream& os, const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  const std::uint8_t tag = precision() == Precision::f32 ? 0 : 1;
  for (const auto& [name, t] : tensors) {
    put_string(os, name);
    put_u32(os, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->shape()) put_u64(os, d);
    os.put(static_cast<char>(tag));
  }
  for (const auto& [name, t] : tensors) {
    if (tag == 0)
      os.write(reinterpret_cast<const char*>(t->data<float>()),
               static_cast<std::streamsize>(t->numel() * sizeof(float)));
    else
      os.write(reinterpret_cast<const char*>(t->data<double>()),
               static_cast<std::streamsize>(t->numel() * sizeof(double)));
  }
}

std::vector<TensorHeader> read_manifest(std::istream& is, const char* section) {
  const std::uint32_t count = get_u32(is, std::string(section) + " manifest count");
  std::vector<TensorHeader> headers(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorHeader& h = headers[i];
    h.name = get_string(is, std::string(section) + " tensor name");
    const std::uint32_t rank = get_u32(is, "rank of " + h.name);
    h.dims.resize(rank);
    for (std::uint32_t d = 0; d < rank; ++d)
      h.dims[d] = static_cast<std::size_t>(get_u64(is, "dims of " + h.name));
    int tag = is.get();
    if (tag < 0) throw data_error("checkpoint truncated while reading precision of " + h.name);
    h.prec_tag = static_cast<std::uint8_t>(tag);
  }
  return headers;
}

Tensor read_payload(std::istream& is, const TensorHeader& h) {
  Tensor t(h.dims);
  const std::size_t n = t.numel();
  if (h.prec_tag == 0) {
    std::vector<float> buf(n);
    if (n && !is.read(reinterpret_cast<char*>(buf.data()),
                      static_cast<std::streamsize>(n * sizeof(float))))
      throw data_error("checkpoint truncated: missing payload for tensor " + h.name);
    for (std::size_t i = 0; i < n; ++i) t.set(i, static_cast<double>(buf[i]));
  } else if (h.prec_tag == 1) {
    std::vector<double> buf(n);
    if (n && !is.read(reinterpret_cast<char*>(buf.data()),
                      static_cast<std::streamsize>(n * sizeof(double))))
      throw data_error("checkpoint truncated: missing payload for tensor " + h.name);
    for (std::size_t i = 0; i < n; ++i) t.set(i, buf[i]);
  } else {
    throw data_error("checkpoint tensor " + h.name + " has unknown precision tag");
  }
  return t;
}

void read_magic_version(std::istream& is, const std::filesystem::path& path) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw data_error("not a checkpoint file (bad magic): " + path.string());
  const std::uint32_t version = get_u32(is, "version");
  if (version != kCheckpointVersion)
    throw data_error("unsupported checkpoint version " + std::to_string(version) + " in " +
                     path.string());
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot write checkpoint " + path.string());
  os.write(kCheckpointMagic, 4);
  put_u32(os, kCheckpointVersion);

  TrainState& st = const_cast<TrainState&>(state);  // named() hands out non-owning pointers
  std::vector<std::pair<std::string, const Tensor*>> model;
  for (auto& [name, t] : st.trainable()) model.emplace_back(name, t);
  write_section(os, model);

  std::vector<std::pair<std::string, const Tensor*>> opt;
  for (const auto& [name, acc] : state.opt) {
    opt.emplace_back("opt/" + name + "/sq_grad", &acc.sq_grad);
    opt.emplace_back("opt/" + name + "/sq_update", &acc.sq_update);
  }
  write_section(os, opt);

  const auto& cfg = state.config;
  std::vector<std::pair<std::string, std::string>> trailer = {
      {"lambda", std::to_string(cfg.lambda)},
      {"embed_dim", std::to_string(state.theta.dims.embed)},
      {"hidden_dim", std::to_string(state.theta.dims.hidden)},
      {"src_vocab", std::to_string(state.theta.dims.src_vocab)},
      {"tgt_vocab", std::to_string(state.theta.dims.tgt_vocab)},
      {"updates", std::to_string(state.updates)},
      {"seed", std::to_string(cfg.seed)},
  };
  put_u32(os, static_cast<std::uint32_t>(trailer.size()));
  for (const auto& [k, v] : trailer) {
    put_string(os, k);
    put_string(os, v);
  }
  if (!os) throw data_error("failed writing checkpoint " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot read checkpoint " + path.string());
  read_magic_version(is, path);

  std::vector<TensorHeader> model_headers = read_manifest(is, "model");
  std::vector<Tensor> model_tensors;
  model_tensors.reserve(model_headers.size());
  for (const auto& h : model_headers) model_tensors.push_back(read_payload(is, h));

  std::vector<TensorHeader> opt_headers = read_manifest(is, "optimizer");
  std::vector<Tensor> opt_tensors;
  opt_tensors.reserve(opt_headers.size());
  for (const auto& h : opt_headers) opt_tensors.push_back(read_payload(is, h));

  const std::uint32_t kv_count = get_u32(is, "trailer count");
  std::map<std::string, std::string> kv;
  for (std::uint32_t i = 0; i < kv_count; ++i) {
    std::string k = get_string(is, "trailer key");
    kv[k] = get_string(is, "trailer value " + k);
  }
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw data_error("checkpoint trailer missing key " + std::string(key));
    return it->second;
  };

  TrainConfig cfg;
  cfg.lambda = std::stod(need("lambda"));
  cfg.embed_dim = std::stoul(need("embed_dim"));
  cfg.hidden_dim = std::stoul(need("hidden_dim"));
  cfg.seed = std::stoull(need("seed"));
  const std::size_t src_vocab = std::stoul(need("src_vocab"));
  const std::size_t tgt_vocab = std::stoul(need("tgt_vocab"));

  TrainState st = init_state(cfg, src_vocab, tgt_vocab);
  st.updates = std::stoull(need("updates"));

  bool has_rec = false;
  for (const auto& h : model_headers)
    if (h.name.rfind("rec.", 0) == 0) has_rec = true;
  if (has_rec) add_reconstructor(st);

  std::map<std::string, Tensor*> slots;
  for (auto& [name, t] : st.trainable()) slots[name] = t;
  std::map<std::string, bool> filled;
  for (std::size_t i = 0; i < model_headers.size(); ++i) {
    auto it = slots.find(model_headers[i].name);
    if (it == slots.end())
      throw data_error("checkpoint has unknown tensor " + model_headers[i].name);
    if (!it->second->same_shape(model_tensors[i]))
      throw data_error("checkpoint tensor " + model_headers[i].name + " has shape " +
                       model_tensors[i].shape_str() + ", expected " +
                       it->second->shape_str());
    const bool rg = it->second->requires_grad();
    *it->second = std::move(model_tensors[i]);
    it->second->set_requires_grad(rg);
    filled[model_headers[i].name] = true;
  }
  for (const auto& [name, t] : slots)
    if (!filled.count(name)) throw data_error("checkpoint missing tensor " + name);

  for (std::size_t i = 0; i < opt_headers.size(); ++i) {
    const std::string& full = opt_headers[i].name;
    if (full.rfind("opt/", 0) != 0)
      throw data_error("optimizer section has non-opt tensor " + full);
    const std::size_t slash = full.rfind('/');
    const std::string param = full.substr(4, slash - 4);
    const std::string kind = full.substr(slash + 1);
    AdadeltaAccum& acc = st.opt[param];
    if (kind == "sq_grad")
      acc.sq_grad = std::move(opt_tensors[i]);
    else if (kind == "sq_update")
      acc.sq_update = std::move(opt_tensors[i]);
    else
      throw data_error("unknown optimizer tensor kind in " + full);
  }
  return st;
}

std::vector<std::string> checkpoint_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot read checkpoint " + path.string());
  read_magic_version(is, path);
  std::vector<std::string> names;
  std::vector<TensorHeader> model_headers = read_manifest(is, "model");
  for (const auto& h : model_headers) {
    names.push_back(h.name);
  }
  for (const auto& h : model_headers) read_payload(is, h);
  std::vector<TensorHeader> opt_headers = read_manifest(is, "optimizer");
  for (const auto& h : opt_headers) names.push_back(h.name);
  return names;
}

}  // namespace edr
