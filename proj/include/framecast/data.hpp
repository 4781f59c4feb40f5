#pragma once

#include <string>
#include <vector>

#include "framecast/tensor.hpp"

namespace framecast {

enum class AnomalyKind { none, hotspot, plume };

const char* anomaly_name(AnomalyKind k);
AnomalyKind anomaly_from_name(const std::string& s);

// A clip is [F, C, H, W] with pixel values in [-1, 1] and one label per frame
// (0 normal, 1 anomalous).
struct VideoClip {
    std::string id;
    Tensor frames;
    std::vector<int> labels;
    AnomalyKind anomaly = AnomalyKind::none;
    int onset = -1;

    int F() const { return static_cast<int>(frames.dim(0)); }
    int C() const { return static_cast<int>(frames.dim(1)); }
    int H() const { return static_cast<int>(frames.dim(2)); }
    int W() const { return static_cast<int>(frames.dim(3)); }
    bool has_anomaly() const;
};

// Synthetic scene generator: a static low background plus drifting Gaussian
// cloud blobs, all capped at a fixed intensity envelope; anomalies break the
// envelope from the onset frame on. Everything is drawn from Rng(seed) in a
// fixed order, so a seed pins the clip bitwise.
struct SynthConfig {
    int H = 16;
    int W = 16;
    int F = 14;
    int n_blobs = 4;
    double v_min = 0.3;  // cloud drift speed range, pixels/frame at 16x16 scale
    double v_max = 1.2;
    AnomalyKind anomaly = AnomalyKind::none;
    int onset = -1;  // first anomalous frame; required when anomaly != none
    uint64_t seed = 0;
};

VideoClip synth_clip(const SynthConfig& cfg);

// Highest pixel value ([-1,1] units) normal synthetic content can reach.
// Doubles as the generator's self-test: normal clips never exceed it, and
// anomalous clips exceed it in every frame from the onset on.
double normal_intensity_envelope();
bool frame_exceeds_envelope(const VideoClip& clip, int frame);

struct DatasetSpec {
    int n_normal = 0;
    int n_hotspot = 0;
    int n_plume = 0;
    SynthConfig base;     // anomaly/onset/seed fields are ignored (driven per clip)
    uint64_t seed = 0;
};

// In-memory dataset with ids normal_0000.., hotspot_0000.., plume_0000...
// Each clip gets its own seed stream derived from (seed, kind, index), so
// train/test sets built from different base seeds never share content.
std::vector<VideoClip> synth_clips(const DatasetSpec& spec);

// Writes <root>/<clip_id>/frame_0000.png.. + labels.csv per clip, plus a
// manifest.csv at the root summarizing ids, sources and label counts.
void write_dataset(const std::string& root, const std::vector<VideoClip>& clips);

// synth_clips + write_dataset.
std::vector<VideoClip> synth_dataset(const std::string& root, const DatasetSpec& spec);

// Loads one clip directory: frames are the *.png files in lexicographic
// order, optionally resized; labels come from labels.csv (absent file means
// all-normal). Mixed source frame sizes are a data error.
VideoClip load_clip_dir(const std::string& dir, int target_h = 0, int target_w = 0);

// Loads every clip subdirectory under root, sorted by id.
std::vector<VideoClip> load_dataset(const std::string& root, int target_h = 0, int target_w = 0);

// Bilinear resample of one [C,H,W] frame (pixel-center convention). The
// output never leaves the input value range; identity when sizes match.
Tensor resize_bilinear(const Tensor& frame, int out_h, int out_w);

}  // namespace framecast
