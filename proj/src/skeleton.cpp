#include "hgcn/skeleton.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hgcn {

namespace {

constexpr int kMaxDim = 10000;

std::vector<std::vector<int>> adjacency_lists(const SkeletonLayout& l) {
  std::vector<std::vector<int>> adj(l.joint_count);
  for (auto [p, c] : l.edges) {
    adj[p].push_back(c);
    adj[c].push_back(p);
  }
  return adj;
}

}  // namespace

void SkeletonLayout::validate() const {
  if (joint_count < 1) fail_config("LayoutMismatch: joint_count must be >= 1");
  if (static_cast<int>(edges.size()) != joint_count - 1)
    fail_config("LayoutMismatch: layout must have V-1 edges");
  for (auto [p, c] : edges) {
    if (p < 0 || p >= joint_count || c < 0 || c >= joint_count)
      fail_config("LayoutMismatch: edge index out of range");
  }
  if (center_joint < 0 || center_joint >= joint_count)
    fail_config("LayoutMismatch: center joint out of range");
  // V-1 edges + connected => spanning tree.
  auto adj = adjacency_lists(*this);
  std::vector<char> seen(joint_count, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int w : adj[u]) {
      if (!seen[w]) {
        seen[w] = 1;
        ++reached;
        stack.push_back(w);
      }
    }
  }
  if (reached != joint_count) fail_config("LayoutMismatch: layout is not connected");
}

SkeletonLayout layout_ntu25() {
  // Kinect v2, 25 joints, (child, parent) pairs rooted at the spine shoulder.
  static const int pairs[24][2] = {
      {1, 2},   {2, 21},  {3, 21},  {4, 3},   {5, 21},  {6, 5},   {7, 6},   {8, 7},
      {9, 21},  {10, 9},  {11, 10}, {12, 11}, {13, 1},  {14, 13}, {15, 14}, {16, 15},
      {17, 1},  {18, 17}, {19, 18}, {20, 19}, {22, 23}, {23, 8},  {24, 25}, {25, 12}};
  SkeletonLayout l;
  l.joint_count = 25;
  l.center_joint = 20;
  for (auto& pc : pairs) l.edges.emplace_back(pc[1] - 1, pc[0] - 1);
  l.validate();
  return l;
}

SkeletonLayout layout_ucla20() {
  // Kinect v1, 20 joints.
  static const int pairs[19][2] = {{1, 2},   {2, 3},   {4, 3},   {5, 3},   {6, 5},
                                   {7, 6},   {8, 7},   {9, 3},   {10, 9},  {11, 10},
                                   {12, 11}, {13, 1},  {14, 13}, {15, 14}, {16, 15},
                                   {17, 1},  {18, 17}, {19, 18}, {20, 19}};
  SkeletonLayout l;
  l.joint_count = 20;
  l.center_joint = 2;
  for (auto& pc : pairs) l.edges.emplace_back(pc[1] - 1, pc[0] - 1);
  l.validate();
  return l;
}

SkeletonLayout layout_chain(int joints) {
  SkeletonLayout l;
  l.joint_count = joints;
  l.center_joint = 0;
  for (int i = 0; i + 1 < joints; ++i) l.edges.emplace_back(i, i + 1);
  l.validate();
  return l;
}

SkeletonLayout layout_by_name(const std::string& name) {
  if (name == "ntu25") return layout_ntu25();
  if (name == "ucla20") return layout_ucla20();
  if (name.rfind("chain", 0) == 0) {
    int v = 0;
    try {
      v = std::stoi(name.substr(5));
    } catch (const std::exception&) {
      fail_config("unknown layout '" + name + "'");
    }
    if (v < 2 || v > kMaxDim) fail_config("chain layout size out of range: " + name);
    return layout_chain(v);
  }
  fail_config("unknown layout '" + name + "'");
}

Modality modality_by_name(const std::string& name) {
  if (name == "joint") return Modality::Joint;
  if (name == "bone") return Modality::Bone;
  if (name == "joint_motion") return Modality::JointMotion;
  if (name == "bone_motion") return Modality::BoneMotion;
  fail_config("unknown modality '" + name + "'");
}

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::Joint: return "joint";
    case Modality::Bone: return "bone";
    case Modality::JointMotion: return "joint_motion";
    case Modality::BoneMotion: return "bone_motion";
  }
  return "joint";
}

SkeletonSequence load_sequence(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_data("cannot open sequence file: " + path);

  char magic[4];
  if (!f.read(magic, 4)) fail_data("TruncatedFile: " + path);
  if (std::memcmp(magic, "SKL1", 4) != 0) fail_data("MagicMismatch: " + path);

  uint32_t hdr[4];
  if (!f.read(reinterpret_cast<char*>(hdr), sizeof(hdr))) fail_data("TruncatedFile: " + path);
  for (int i = 0; i < 3; ++i) {
    if (hdr[i] == 0 || hdr[i] > kMaxDim) fail_data("ShapeOverflow: " + path);
  }

  SkeletonSequence s;
  s.persons = static_cast<int>(hdr[0]);
  s.frames = static_cast<int>(hdr[1]);
  s.joints = static_cast<int>(hdr[2]);
  s.label = static_cast<int>(hdr[3]);

  size_t n = static_cast<size_t>(s.persons) * s.frames * s.joints * 3;
  std::vector<float> raw(n);
  if (!f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 4)))
    fail_data("TruncatedFile: " + path);

  s.coords.resize(n);
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(raw[i])) fail_data("NonFiniteData: " + path);
    s.coords[i] = static_cast<real>(raw[i]);
  }
  return s;
}

void write_sequence(const SkeletonSequence& s, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail_data("cannot open file for writing: " + path);
  f.write("SKL1", 4);
  uint32_t hdr[4] = {static_cast<uint32_t>(s.persons), static_cast<uint32_t>(s.frames),
                     static_cast<uint32_t>(s.joints), static_cast<uint32_t>(s.label)};
  f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  std::vector<float> raw(s.coords.size());
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(s.coords[i]);
  f.write(reinterpret_cast<const char*>(raw.data()),
          static_cast<std::streamsize>(raw.size() * 4));
  if (!f) fail_data("write failed: " + path);
}

SkeletonSequence derive_modality(const SkeletonSequence& s, Modality m,
                                 const SkeletonLayout& layout) {
  if (layout.joint_count != s.joints)
    fail_data("LayoutMismatch: layout has " + std::to_string(layout.joint_count) +
              " joints, sequence has " + std::to_string(s.joints));

  if (m == Modality::Joint) return s;

  if (m == Modality::Bone || m == Modality::BoneMotion) {
    SkeletonSequence out = s;
    std::fill(out.coords.begin(), out.coords.end(), real(0));
    for (int p = 0; p < s.persons; ++p)
      for (int t = 0; t < s.frames; ++t)
        for (auto [pa, ch] : layout.edges)
          for (int a = 0; a < 3; ++a) out.at(p, t, ch, a) = s.at(p, t, ch, a) - s.at(p, t, pa, a);
    // Root joint row stays zero.
    if (m == Modality::Bone) return out;
    return derive_modality(out, Modality::JointMotion, layout);
  }

  // JointMotion: forward frame difference, last frame zero.
  SkeletonSequence out = s;
  std::fill(out.coords.begin(), out.coords.end(), real(0));
  for (int p = 0; p < s.persons; ++p)
    for (int t = 0; t + 1 < s.frames; ++t)
      for (int v = 0; v < s.joints; ++v)
        for (int a = 0; a < 3; ++a) out.at(p, t, v, a) = s.at(p, t + 1, v, a) - s.at(p, t, v, a);
  return out;
}

SkeletonSequence resample_time(const SkeletonSequence& s, int target_frames) {
  if (s.frames < 1 || s.coords.empty()) fail_data("EmptySequence: cannot resample");
  if (target_frames < 1) fail_data("EmptySequence: target frame count must be >= 1");
  if (target_frames == s.frames) return s;

  SkeletonSequence out;
  out.persons = s.persons;
  out.frames = target_frames;
  out.joints = s.joints;
  out.label = s.label;
  out.coords.assign(static_cast<size_t>(s.persons) * target_frames * s.joints * 3, real(0));

  for (int t = 0; t < target_frames; ++t) {
    real pos = (target_frames == 1)
                   ? 0
                   : static_cast<real>(t) * (s.frames - 1) / (target_frames - 1);
    int t0 = static_cast<int>(pos);
    if (t0 > s.frames - 2) t0 = s.frames - 2;
    if (t0 < 0) t0 = 0;
    real frac = (s.frames == 1) ? 0 : pos - t0;
    int t1 = (s.frames == 1) ? 0 : t0 + 1;
    for (int p = 0; p < s.persons; ++p)
      for (int v = 0; v < s.joints; ++v)
        for (int a = 0; a < 3; ++a)
          out.at(p, t, v, a) = (1 - frac) * s.at(p, t0, v, a) + frac * s.at(p, t1, v, a);
  }
  return out;
}

void center_first_frame(SkeletonSequence& s, int center_joint) {
  if (center_joint < 0 || center_joint >= s.joints)
    fail_data("LayoutMismatch: center joint out of range");
  for (int p = 0; p < s.persons; ++p) {
    real cx = s.at(p, 0, center_joint, 0);
    real cy = s.at(p, 0, center_joint, 1);
    real cz = s.at(p, 0, center_joint, 2);
    if (cx == 0 && cy == 0 && cz == 0) continue;
    for (int t = 0; t < s.frames; ++t)
      for (int v = 0; v < s.joints; ++v) {
        s.at(p, t, v, 0) -= cx;
        s.at(p, t, v, 1) -= cy;
        s.at(p, t, v, 2) -= cz;
      }
  }
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail_data("cannot open manifest: " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string label_str;
    if (!std::getline(ss, e.path, '\t') || !std::getline(ss, label_str, '\t') ||
        !std::getline(ss, e.split))
      fail_data("manifest line " + std::to_string(lineno) + " malformed in " + path);
    try {
      e.label = std::stoi(label_str);
    } catch (const std::exception&) {
      fail_data("manifest line " + std::to_string(lineno) + " has a bad label in " + path);
    }
    if (e.split != "train" && e.split != "val")
      fail_data("manifest line " + std::to_string(lineno) + " has a bad split in " + path);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace hgcn
