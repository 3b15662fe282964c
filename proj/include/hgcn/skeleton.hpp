#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hgcn/common.hpp"

namespace hgcn {

// Physical skeleton: a spanning tree of (parent, child) joint pairs.
struct SkeletonLayout {
  int joint_count = 0;
  std::vector<std::pair<int, int>> edges;  // (parent, child)
  int center_joint = 0;

  void validate() const;  // spanning tree, indices in range
};

SkeletonLayout layout_ntu25();
SkeletonLayout layout_ucla20();
SkeletonLayout layout_chain(int joints);
// Names: "ntu25", "ucla20", "chain<V>" (e.g. "chain5").
SkeletonLayout layout_by_name(const std::string& name);

enum class Modality { Joint, Bone, JointMotion, BoneMotion };

Modality modality_by_name(const std::string& name);
std::string modality_name(Modality m);

// One sample: coordinates over (person, frame, joint, axis), row-major.
struct SkeletonSequence {
  int persons = 0;
  int frames = 0;
  int joints = 0;
  int label = 0;
  std::vector<real> coords;  // persons*frames*joints*3

  real& at(int p, int t, int v, int a) {
    return coords[((static_cast<size_t>(p) * frames + t) * joints + v) * 3 + a];
  }
  real at(int p, int t, int v, int a) const {
    return coords[((static_cast<size_t>(p) * frames + t) * joints + v) * 3 + a];
  }
  size_t numel() const { return coords.size(); }
};

// SKL1 binary format (little-endian): magic "SKL1", u32 P, u32 T, u32 V,
// u32 label, then P*T*V*3 float32 values in (person, frame, joint, axis) order.
SkeletonSequence load_sequence(const std::string& path);
void write_sequence(const SkeletonSequence& s, const std::string& path);

SkeletonSequence derive_modality(const SkeletonSequence& s, Modality m,
                                 const SkeletonLayout& layout);

// Linear interpolation along the frame axis onto target_frames uniformly
// spaced positions; endpoints preserved.
SkeletonSequence resample_time(const SkeletonSequence& s, int target_frames);

// Translate so that person p's first-frame center joint sits at the origin.
// All-zero person slots stay zero.
void center_first_frame(SkeletonSequence& s, int center_joint);

struct ManifestEntry {
  std::string path;  // relative to the dataset root
  int label = 0;
  std::string split;  // "train" or "val"
};

// One sample per line: relative/path<TAB>label<TAB>split.
std::vector<ManifestEntry> load_manifest(const std::string& path);

}  // namespace hgcn
