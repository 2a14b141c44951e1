#include "ebseg/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "ebseg/net.hpp"
#include "ebseg/tensor_io.hpp"

namespace ebseg {

namespace {

std::string dims_str(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

Tensor<float> vec_tensor(const std::vector<float>& v) { return Tensor<float>({v.size()}, v); }

// Every stored tensor of `ps` in storage order.
std::vector<std::pair<std::string, Tensor<float>>> flatten(const ParamStore<float>& ps) {
  std::vector<std::pair<std::string, Tensor<float>>> out;
  for (const auto& e : ps.tensors()) out.emplace_back(e.name, e.value);
  for (const auto& b : ps.batch_norms()) {
    out.emplace_back(b.name + ".running_mean", vec_tensor(b.state.running_mean));
    out.emplace_back(b.name + ".running_var", vec_tensor(b.state.running_var));
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const TrainConfig& cfg, const ParamStore<float>& params) {
  std::filesystem::create_directories(dir);
  const auto tensors = flatten(params);
  {
    std::ofstream os(dir / "config.txt", std::ios::binary);
    os << to_text(cfg);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + (dir / "config.txt").string());
  }
  std::ofstream manifest(dir / "manifest.txt", std::ios::binary);
  std::ofstream blob(dir / "tensors.eblt", std::ios::binary);
  for (const auto& [name, t] : tensors) {
    manifest << name << ' ' << dims_str(t.shape()) << '\n';
    write_eblt(blob, t);
  }
  if (!manifest || !blob) throw std::runtime_error("checkpoint: write failed in " + dir.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  Checkpoint ck{load_train_config(dir / "config.txt"), {}};
  ck.params = init_params(ck.config.net, 0);
  const auto expected = flatten(ck.params);

  std::ifstream manifest(dir / "manifest.txt");
  std::ifstream blob(dir / "tensors.eblt", std::ios::binary);
  if (!manifest || !blob) throw std::runtime_error("checkpoint: missing manifest or tensors in " + dir.string());

  std::vector<std::pair<std::string, std::string>> listed;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, dims;
    ls >> name >> dims;
    listed.emplace_back(name, dims);
  }

  std::ostringstream problems;
  const std::size_t common = std::min(listed.size(), expected.size());
  for (std::size_t i = 0; i < common; ++i) {
    const std::string want = dims_str(expected[i].second.shape());
    if (listed[i].first != expected[i].first || listed[i].second != want)
      problems << "\n  stored " << listed[i].first << ' ' << listed[i].second << ", network expects "
               << expected[i].first << ' ' << want;
  }
  for (std::size_t i = common; i < listed.size(); ++i)
    problems << "\n  unexpected " << listed[i].first << ' ' << listed[i].second;
  for (std::size_t i = common; i < expected.size(); ++i)
    problems << "\n  missing " << expected[i].first << ' ' << dims_str(expected[i].second.shape());
  if (!problems.str().empty())
    throw std::runtime_error("checkpoint " + dir.string() + " does not match its network:" + problems.str());

  auto& bns = ck.params.batch_norms();
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const Tensor<float> t = read_eblt(blob);
    if (t.shape() != expected[i].second.shape())
      throw std::runtime_error("checkpoint: tensor " + expected[i].first + " has shape " + shape_str(t.shape()));
    const std::size_t n_params = ck.params.tensors().size();
    if (i < n_params) {
      std::copy(t.data().begin(), t.data().end(), ck.params.tensors()[i].value.data().begin());
    } else {
      auto& st = bns[(i - n_params) / 2].state;
      auto& dst = (i - n_params) % 2 == 0 ? st.running_mean : st.running_var;
      std::copy(t.data().begin(), t.data().end(), dst.begin());
    }
  }
  return ck;
}

}  // namespace ebseg
