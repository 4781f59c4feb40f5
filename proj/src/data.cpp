#include "framecast/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "framecast/image_io.hpp"

namespace fs = std::filesystem;

namespace framecast {

const char* anomaly_name(AnomalyKind k) {
    switch (k) {
        case AnomalyKind::none: return "none";
        case AnomalyKind::hotspot: return "hotspot";
        case AnomalyKind::plume: return "plume";
    }
    return "none";
}

AnomalyKind anomaly_from_name(const std::string& s) {
    if (s == "none") return AnomalyKind::none;
    if (s == "hotspot") return AnomalyKind::hotspot;
    if (s == "plume") return AnomalyKind::plume;
    throw ConfigError("unknown anomaly kind: " + s);
}

bool VideoClip::has_anomaly() const {
    return std::any_of(labels.begin(), labels.end(), [](int l) { return l != 0; });
}

double normal_intensity_envelope() {
    // Normal content is capped at 0.7 in [0,1] units before mapping to [-1,1].
    return 0.7 * 2.0 - 1.0;
}

namespace {

constexpr double kEnvelope01 = 0.7;

double wrapped_d2(double x, double y, double cx, double cy, double W, double H) {
    double dx = std::fabs(x - cx);
    dx = std::min(dx, W - dx);
    double dy = std::fabs(y - cy);
    dy = std::min(dy, H - dy);
    return dx * dx + dy * dy;
}

// Fold a coordinate back into [0, n-1] by reflecting off the borders, then
// snap to the nearest pixel so a kernel peak always lands on a grid point.
int reflect_to_pixel(double v, int n) {
    double period = 2.0 * (n - 1);
    double m = v - std::floor(v / period) * period;
    double folded = m <= n - 1 ? m : period - m;
    return std::clamp(static_cast<int>(std::lround(folded)), 0, n - 1);
}

void validate_synth(const SynthConfig& c) {
    if (c.H < 8 || c.W < 8) throw ConfigError("synth: H and W must be >= 8");
    if (c.F < 1) throw ConfigError("synth: F must be >= 1");
    if (c.n_blobs < 0) throw ConfigError("synth: n_blobs must be >= 0");
    if (c.v_min < 0 || c.v_max < c.v_min) throw ConfigError("synth: invalid drift speed range");
    if (c.anomaly != AnomalyKind::none && (c.onset < 0 || c.onset >= c.F))
        throw ConfigError("synth: onset " + std::to_string(c.onset) + " outside 0.." +
                          std::to_string(c.F - 1));
}

}  // namespace

VideoClip synth_clip(const SynthConfig& cfg) {
    validate_synth(cfg);
    Rng rng(cfg.seed);
    int H = cfg.H, W = cfg.W, F = cfg.F;
    double sc = static_cast<double>(std::min(H, W)) / 16.0;

    // Static background: a base level plus two broad bumps. Both ranges are kept
    // narrow so the per-clip brightness floor stays close to inferable from two
    // conditioning frames.
    double base = rng.uniform(0.08, 0.12);
    struct Blob {
        double amp, sigma2, cx, cy;
    };
    std::vector<Blob> bg(2);
    for (Blob& b : bg) {
        b.amp = rng.uniform(0.06, 0.12);
        double s = rng.uniform(4.0, 8.0) * sc;
        b.sigma2 = s * s;
        b.cx = rng.uniform(0.0, static_cast<double>(W));
        b.cy = rng.uniform(0.0, static_cast<double>(H));
    }

    // Drifting cloud layer: all blobs share one per-clip velocity, so two
    // consecutive frames determine the motion.
    std::vector<Blob> clouds(static_cast<size_t>(cfg.n_blobs));
    for (Blob& b : clouds) {
        b.amp = rng.uniform(0.2, 0.4);
        double s = rng.uniform(1.5, 3.5) * sc;
        b.sigma2 = s * s;
        b.cx = rng.uniform(0.0, static_cast<double>(W));
        b.cy = rng.uniform(0.0, static_cast<double>(H));
    }
    double speed = rng.uniform(cfg.v_min, cfg.v_max) * sc;
    double theta = rng.uniform(0.0, 2.0 * M_PI);
    double vx = speed * std::cos(theta), vy = speed * std::sin(theta);

    // Anomaly geometry (pixel-snapped source so the peak always lands on a pixel).
    // The hotspot front drifts across the frame and the plume wind direction keeps
    // shifting, so post-onset frames never settle into a static, extrapolable shape.
    int acx = 0, acy = 0;
    double atheta = 0;
    double aspeed = 0, adrift = 0, aturn = 0;
    if (cfg.anomaly != AnomalyKind::none) {
        acx = static_cast<int>(rng.uniform_int(2, W - 3));
        acy = static_cast<int>(rng.uniform_int(2, H - 3));
        atheta = rng.uniform(0.0, 2.0 * M_PI);
        aspeed = rng.uniform(1.4, 2.2) * sc;
        adrift = rng.uniform(0.0, 2.0 * M_PI);
        aturn = (rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0) * rng.uniform(0.15, 0.30);
    }

    VideoClip clip;
    clip.frames = Tensor::zeros({F, 1, H, W}, DType::f32);
    clip.labels.assign(static_cast<size_t>(F), 0);
    clip.anomaly = cfg.anomaly;
    clip.onset = cfg.anomaly == AnomalyKind::none ? -1 : cfg.onset;

    float* px = clip.frames.ptr<float>();
    for (int i = 0; i < F; ++i) {
        bool anomalous = cfg.anomaly != AnomalyKind::none && i >= cfg.onset;
        if (anomalous) clip.labels[static_cast<size_t>(i)] = 1;
        int age = anomalous ? i - cfg.onset : 0;
        double hot_amp = std::min(0.97, 0.87 + 0.10 * age);
        double hot_s = std::min(4.0, 0.9 + 0.45 * age) * sc;
        double hot_s2 = hot_s * hot_s;
        double plume_amp = std::min(0.95, 0.75 + 0.05 * age);
        double plume_len = std::min(1.5 * std::max(H, W), (1.5 + 2.0 * age) * sc);
        double plume_w = (1.0 + 0.12 * age) * sc;
        double plume_s2 = plume_w * plume_w;
        int hx = reflect_to_pixel(acx + aspeed * std::cos(adrift) * age, W);
        int hy = reflect_to_pixel(acy + aspeed * std::sin(adrift) * age, H);
        double pdir_x = std::cos(atheta + aturn * age);
        double pdir_y = std::sin(atheta + aturn * age);

        float* fr = px + static_cast<int64_t>(i) * H * W;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double v = base;
                for (const Blob& b : bg)
                    v += b.amp * std::exp(-wrapped_d2(x, y, b.cx, b.cy, W, H) / (2.0 * b.sigma2));
                for (const Blob& b : clouds) {
                    double cx = b.cx + vx * i, cy = b.cy + vy * i;
                    cx -= std::floor(cx / W) * W;
                    cy -= std::floor(cy / H) * H;
                    v += b.amp * std::exp(-wrapped_d2(x, y, cx, cy, W, H) / (2.0 * b.sigma2));
                }
                v = std::min(v, kEnvelope01);
                if (anomalous) {
                    if (cfg.anomaly == AnomalyKind::hotspot) {
                        double dx = x - hx, dy = y - hy;
                        v += hot_amp * std::exp(-(dx * dx + dy * dy) / (2.0 * hot_s2));
                    } else {
                        double rx = x - acx, ry = y - acy;
                        double t = std::clamp(rx * pdir_x + ry * pdir_y, 0.0, plume_len);
                        double nx = acx + t * pdir_x, ny = acy + t * pdir_y;
                        double dx = x - nx, dy = y - ny;
                        v += plume_amp * std::exp(-(dx * dx + dy * dy) / (2.0 * plume_s2));
                    }
                    v = std::min(v, 1.0);
                }
                fr[y * W + x] = static_cast<float>(v * 2.0 - 1.0);
            }
        }
    }
    return clip;
}

bool frame_exceeds_envelope(const VideoClip& clip, int frame) {
    if (frame < 0 || frame >= clip.F()) throw UsageError("frame_exceeds_envelope: frame out of range");
    const float* px = clip.frames.ptr<float>();
    int64_t n = static_cast<int64_t>(clip.C()) * clip.H() * clip.W();
    const float* fr = px + frame * n;
    float env = static_cast<float>(normal_intensity_envelope()) + 1e-6f;
    for (int64_t i = 0; i < n; ++i)
        if (fr[i] > env) return true;
    return false;
}

std::vector<VideoClip> synth_clips(const DatasetSpec& spec) {
    if (spec.n_normal < 0 || spec.n_hotspot < 0 || spec.n_plume < 0)
        throw ConfigError("synth dataset: clip counts must be >= 0");
    std::vector<VideoClip> out;
    out.reserve(static_cast<size_t>(spec.n_normal + spec.n_hotspot + spec.n_plume));
    struct Group {
        AnomalyKind kind;
        int count;
        const char* prefix;
        uint64_t tag;
    };
    const Group groups[] = {{AnomalyKind::none, spec.n_normal, "normal", 1},
                            {AnomalyKind::hotspot, spec.n_hotspot, "hotspot", 2},
                            {AnomalyKind::plume, spec.n_plume, "plume", 3}};
    for (const Group& g : groups) {
        for (int i = 0; i < g.count; ++i) {
            SynthConfig c = spec.base;
            c.anomaly = g.kind;
            c.seed = Rng::mix(Rng::mix(spec.seed, g.tag), static_cast<uint64_t>(i));
            if (g.kind != AnomalyKind::none) {
                // Onset sits away from both clip ends so several anomalous
                // frames always exist.
                int lo = std::min(4, c.F - 1);
                int hi = std::max(lo, c.F - 4);
                Rng onset_rng(Rng::mix(c.seed, 0xf0));
                c.onset = static_cast<int>(onset_rng.uniform_int(lo, hi));
            }
            VideoClip clip = synth_clip(c);
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%s_%04d", g.prefix, i);
            clip.id = buf;
            out.push_back(std::move(clip));
        }
    }
    return out;
}

void write_dataset(const std::string& root, const std::vector<VideoClip>& clips) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw IoError("write_dataset: cannot create " + root + ": " + ec.message());

    std::ofstream manifest(fs::path(root) / "manifest.csv", std::ios::trunc);
    if (!manifest) throw IoError("write_dataset: cannot write manifest in " + root);
    manifest << "clip_id,source,anomaly,frames,anomalous_frames,onset\n";

    for (const VideoClip& clip : clips) {
        fs::path dir = fs::path(root) / clip.id;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("write_dataset: cannot create " + dir.string());
        int F = clip.F(), H = clip.H(), W = clip.W();
        if (clip.C() != 1) throw UsageError("write_dataset: only single-channel clips are written");
        const float* px = clip.frames.ptr<float>();
        GrayImage img;
        img.height = H;
        img.width = W;
        img.pixels.resize(static_cast<size_t>(H) * W);
        for (int i = 0; i < F; ++i) {
            const float* fr = px + static_cast<int64_t>(i) * H * W;
            for (int64_t j = 0; j < static_cast<int64_t>(H) * W; ++j)
                img.pixels[static_cast<size_t>(j)] = (fr[j] + 1.0f) * 0.5f;
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%04d.png", i);
            write_gray_png((dir / name).string(), img);
        }
        std::ofstream labels(dir / "labels.csv", std::ios::trunc);
        if (!labels) throw IoError("write_dataset: cannot write labels for " + clip.id);
        labels << "frame_index,label\n";
        for (int i = 0; i < F; ++i) labels << i << "," << clip.labels[static_cast<size_t>(i)] << "\n";

        int n_anom = 0;
        for (int l : clip.labels) n_anom += l != 0;
        manifest << clip.id << ",synthetic," << anomaly_name(clip.anomaly) << "," << F << "," << n_anom
                 << "," << clip.onset << "\n";
    }
}

std::vector<VideoClip> synth_dataset(const std::string& root, const DatasetSpec& spec) {
    std::vector<VideoClip> clips = synth_clips(spec);
    write_dataset(root, clips);
    return clips;
}

Tensor resize_bilinear(const Tensor& frame, int out_h, int out_w) {
    if (frame.ndim() != 3) throw DimensionError("resize_bilinear: expected [C,H,W]");
    if (out_h < 1 || out_w < 1) throw UsageError("resize_bilinear: target size must be positive");
    int64_t C = frame.dim(0), H = frame.dim(1), W = frame.dim(2);
    if (out_h == H && out_w == W) return frame.clone();
    Tensor out = Tensor::zeros({C, out_h, out_w}, frame.dtype());
    double sy = static_cast<double>(H) / out_h;
    double sx = static_cast<double>(W) / out_w;
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t y = 0; y < out_h; ++y) {
            double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
            fy = std::clamp(fy, 0.0, static_cast<double>(H - 1));
            int64_t y0 = static_cast<int64_t>(std::floor(fy));
            int64_t y1 = std::min(y0 + 1, H - 1);
            double wy = fy - static_cast<double>(y0);
            for (int64_t x = 0; x < out_w; ++x) {
                double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
                fx = std::clamp(fx, 0.0, static_cast<double>(W - 1));
                int64_t x0 = static_cast<int64_t>(std::floor(fx));
                int64_t x1 = std::min(x0 + 1, W - 1);
                double wx = fx - static_cast<double>(x0);
                double v00 = frame.at((c * H + y0) * W + x0);
                double v01 = frame.at((c * H + y0) * W + x1);
                double v10 = frame.at((c * H + y1) * W + x0);
                double v11 = frame.at((c * H + y1) * W + x1);
                double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
                out.set((c * out_h + y) * out_w + x, v);
            }
        }
    }
    return out;
}

namespace {

std::vector<int> read_labels_csv(const fs::path& path, int expect_frames) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<int> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string idx, val;
        if (!std::getline(ss, idx, ',') || !std::getline(ss, val, ','))
            throw DataError("labels.csv: malformed line '" + line + "' in " + path.string());
        if (!idx.empty() && !std::isdigit(static_cast<unsigned char>(idx[0]))) continue;  // header
        int label;
        if (val == "0" || val == "normal")
            label = 0;
        else if (val == "1" || val == "anomalous")
            label = 1;
        else
            throw DataError("labels.csv: unknown label '" + val + "' in " + path.string());
        labels.push_back(label);
    }
    if (static_cast<int>(labels.size()) != expect_frames)
        throw DataError("labels.csv in " + path.parent_path().string() + " lists " +
                        std::to_string(labels.size()) + " frames, clip has " +
                        std::to_string(expect_frames));
    return labels;
}

}  // namespace

VideoClip load_clip_dir(const std::string& dir, int target_h, int target_w) {
    fs::path path(dir);
    if (!fs::is_directory(path)) throw DataError("load_clip_dir: " + dir + " is not a directory");
    std::vector<fs::path> frame_files;
    for (const auto& e : fs::directory_iterator(path))
        if (e.is_regular_file() && e.path().extension() == ".png") frame_files.push_back(e.path());
    if (frame_files.empty()) throw DataError("load_clip_dir: no frames in " + dir);
    std::sort(frame_files.begin(), frame_files.end());

    int F = static_cast<int>(frame_files.size());
    int src_h = -1, src_w = -1;
    std::vector<GrayImage> images;
    images.reserve(static_cast<size_t>(F));
    for (const fs::path& f : frame_files) {
        GrayImage img = read_gray_png(f.string());
        if (src_h < 0) {
            src_h = img.height;
            src_w = img.width;
        } else if (img.height != src_h || img.width != src_w) {
            throw DataError("load_clip_dir: ragged frame sizes in " + dir + " (" + f.filename().string() +
                            " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                            ", expected " + std::to_string(src_w) + "x" + std::to_string(src_h) + ")");
        }
        images.push_back(std::move(img));
    }
    int H = target_h > 0 ? target_h : src_h;
    int W = target_w > 0 ? target_w : src_w;

    VideoClip clip;
    clip.id = path.filename().string();
    clip.frames = Tensor::zeros({F, 1, H, W}, DType::f32);
    float* px = clip.frames.ptr<float>();
    for (int i = 0; i < F; ++i) {
        Tensor src = Tensor::zeros({1, src_h, src_w}, DType::f32);
        float* sp = src.ptr<float>();
        for (int64_t j = 0; j < static_cast<int64_t>(src_h) * src_w; ++j)
            sp[j] = images[static_cast<size_t>(i)].pixels[static_cast<size_t>(j)] * 2.0f - 1.0f;
        Tensor res = resize_bilinear(src, H, W);
        const float* rp = res.ptr<float>();
        std::copy(rp, rp + static_cast<int64_t>(H) * W, px + static_cast<int64_t>(i) * H * W);
    }
    fs::path labels_path = path / "labels.csv";
    if (fs::exists(labels_path))
        clip.labels = read_labels_csv(labels_path, F);
    else
        clip.labels.assign(static_cast<size_t>(F), 0);
    if (clip.has_anomaly()) {
        for (int i = 0; i < F; ++i)
            if (clip.labels[static_cast<size_t>(i)]) {
                clip.onset = i;
                break;
            }
    }
    return clip;
}

std::vector<VideoClip> load_dataset(const std::string& root, int target_h, int target_w) {
    fs::path path(root);
    if (!fs::is_directory(path)) throw DataError("load_dataset: " + root + " is not a directory");
    std::vector<std::string> clip_dirs;
    for (const auto& e : fs::directory_iterator(path)) {
        if (!e.is_directory()) continue;
        bool has_png = false;
        for (const auto& f : fs::directory_iterator(e.path()))
            if (f.is_regular_file() && f.path().extension() == ".png") {
                has_png = true;
                break;
            }
        if (has_png) clip_dirs.push_back(e.path().string());
    }
    if (clip_dirs.empty()) throw DataError("load_dataset: no clip directories under " + root);
    std::sort(clip_dirs.begin(), clip_dirs.end());
    std::vector<VideoClip> clips;
    clips.reserve(clip_dirs.size());
    for (const std::string& d : clip_dirs) clips.push_back(load_clip_dir(d, target_h, target_w));
    return clips;
}

}  // namespace framecast
