#pragma once

#include "core/dataset.hpp"
#include "core/itq.hpp"
#include "core/model.hpp"
#include "core/types.hpp"

#include <string>
#include <vector>

namespace dp3d::io {

// --- point cloud formats ---------------------------------------------------

// ASCII XYZ: one "x y z" triple per line, '#' comments and blank lines
// ignored.
PointCloud load_xyz(const std::string& path);
void save_xyz(const PointCloud& cloud, const std::string& path);

// ASCII PLY subset: vertex element with float x/y/z and optional nx/ny/nz.
// Faces are skipped; any other vertex property is rejected.
PointCloud load_ply(const std::string& path);

// Dispatch on extension (.ply vs everything else = XYZ).
PointCloud load_cloud(const std::string& path);

// --- corpus text formats ----------------------------------------------------

std::vector<int> load_keypoints(const std::string& path);
void save_keypoints(const std::vector<int>& keypoints, const std::string& path);

std::vector<int> load_part_labels(const std::string& path);
void save_part_labels(const std::vector<int>& labels, const std::string& path);

// Lines "model_a model_b idx_a idx_b [sym_group]"; consecutive lines with the
// same model pair form one set.
std::vector<CorrespondenceSet> load_correspondences(const std::string& path);
void save_correspondences(const std::vector<CorrespondenceSet>& sets, const std::string& path);

// Manifest stanzas: "clouds:", "keypoints:", "labels:", "correspondences:",
// each followed by one relative path per line. Model ids are cloud file
// stems.
Corpus load_manifest(const std::string& path);

// Writes XYZ clouds, keypoint/label files, correspondence files and the
// manifest into dir. Returns the manifest path.
std::string write_corpus(const Corpus& corpus, const std::string& dir);

// --- binary formats ----------------------------------------------------------

// Checkpoint "DP3D": version, arch, f32 parameter blobs, trailing CRC32.
void save_checkpoint(const model::EncoderParams& params, const std::string& path);
model::EncoderParams load_checkpoint(const std::string& path);

// Descriptor file "DP3F": D, count, then per record a keypoint index and D
// f32 values.
void save_descriptor_set(const DescriptorSet& set, const std::string& path);
DescriptorSet load_descriptor_set(const std::string& path);

// Binary codes "DP3B": version byte, bit count, code count, packed codes.
void save_codes(const std::vector<itq::BinaryCode>& codes, const std::string& path);
std::vector<itq::BinaryCode> load_codes(const std::string& path);

// ITQ model "DP3Q", following the checkpoint conventions.
void save_itq_model(const itq::ItqModel& model, const std::string& path);
itq::ItqModel load_itq_model(const std::string& path);

// Training set "DP3T".
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

// --- helpers -----------------------------------------------------------------

std::string path_stem(const std::string& path);
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

}  // namespace dp3d::io
