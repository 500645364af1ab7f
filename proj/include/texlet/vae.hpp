// vae.hpp — local-global texture VAE. A shared 2D encoder turns each patch
// image into an r x r feature grid; pooled patch features plus anchor
// position embeddings go through a deep 3D encoder with full cross-patch
// attention into per-patch latents (Texlets); decoding runs the inverse
// cascade back to patch images. Training uses a patch-feature reconstruction
// term, an atlas-space reconstruction term and a KL penalty.
#pragma once

#include <cstring>
#include <memory>

#include "texlet/nn/transformer.hpp"
#include "texlet/patch_io.hpp"

namespace texlet {

struct VaeConfig {
    int patch_size = 32;    // R: patch image resolution
    int feature_grid = 4;   // r: tokens per side in the 2D stage
    int d_phi = 64;         // patch feature channels
    int d_latent = 16;      // Texlet width
    int enc_layers = 8;     // 3D encoder depth
    int dec_layers = 16;    // 3D decoder depth
    int width = 64;         // attention width of the 3D stages
    int heads = 4;
    int pos_dims = 48;      // anchor embedding width; 6 scalars * 2 * octaves
    double logvar_lo = -10.0;
    double logvar_hi = 10.0;

    int block_side() const { return patch_size / feature_grid; }
    int tokens() const { return feature_grid * feature_grid; }
    int patch_elems() const { return patch_size * patch_size * 3; }

    void validate() const {
        require(patch_size >= 8, "patch_size must be >= 8");
        require(feature_grid >= 1 && patch_size % feature_grid == 0,
                "patch_size must be divisible by feature_grid");
        require(pos_dims % 12 == 0, "pos_dims must be divisible by 12");
        require(width % heads == 0, "width must be divisible by heads");
        require(d_phi >= 1 && d_latent >= 1 && enc_layers >= 1 && dec_layers >= 1, "bad dims");
    }
};

// N Texlet rows with spatial anchors and the Gaussian posterior they were
// sampled from (latents == posterior mean at inference).
struct TexletSet {
    nn::Tensor latents;          // [N x d]
    nn::Tensor posterior_mean;   // [N x d]
    nn::Tensor posterior_logvar; // [N x d]
    std::vector<PatchAnchor> anchors;

    int count() const { return latents.rows(); }
    int dim() const { return latents.cols(); }
};

// Sinusoidal embedding of (position, normal) at dims/12 octaves per scalar.
inline std::vector<double> embed_position(const PatchAnchor& anchor, int dims) {
    require(dims % 12 == 0 && dims > 0, "position embedding dims must be divisible by 12");
    int octaves = dims / 12;
    std::vector<double> out;
    out.reserve(dims);
    for (double s : {anchor.position.x, anchor.position.y, anchor.position.z, anchor.normal.x,
                     anchor.normal.y, anchor.normal.z})
        nn::sincos_octaves(s, octaves, out);
    return out;
}

inline nn::Tensor anchors_embedding(const std::vector<PatchAnchor>& anchors, int dims) {
    nn::Tensor out({(int)anchors.size(), dims});
    for (size_t i = 0; i < anchors.size(); ++i) {
        std::vector<double> row = embed_position(anchors[i], dims);
        std::copy(row.begin(), row.end(), out.data.begin() + (int64_t)i * dims);
    }
    return out;
}

inline nn::Tensor patch_to_tensor(const TexturePatch& patch) {
    const ImageRGB& img = patch.image;
    nn::Tensor t({1, img.width * img.height * 3});
    for (size_t i = 0; i < img.px.size(); ++i) t.data[i] = img.px[i];
    return t;
}

inline ImageRGB tensor_to_patch_image(const nn::Tensor& t, int resolution) {
    require(t.numel() == (int64_t)resolution * resolution * 3, "bad patch tensor size");
    ImageRGB img(resolution, resolution);
    for (size_t i = 0; i < img.px.size(); ++i) img.px[i] = (float)t.data[i];
    return img;
}

class TexletVae {
public:
    TexletVae(const VaeConfig& cfg, uint64_t init_seed) : cfg_(cfg), params_(init_seed) {
        cfg_.validate();
        build_index_tables();
        declare_all();
        params_.freeze();
    }

    const VaeConfig& config() const { return cfg_; }
    nn::ModelParams& params() { return params_; }
    const nn::ModelParams& params() const { return params_; }

    // --- graph builders (operate on the caller's tape) ---

    // Patch image row [1 x R^2*3] -> feature grid [r^2 x d_phi].
    nn::Value encode_patch(nn::Tape& t, nn::Value img_row) {
        nn::Value blocks = nn::gather_fixed(t, img_row, to_blocks_,
                                            {cfg_.tokens(), block_elems()});
        nn::Value x = nn::linear(t, blocks, params_, "enc2d.proj", block_elems(), cfg_.d_phi);
        x = nn::add(t, x, t.param("enc2d.pos"));
        return nn::transformer_block(t, x, params_, "enc2d.block", cfg_.d_phi, cfg_.heads);
    }

    struct Posterior {
        nn::Value mean, logvar, latent;
    };

    // Pooled patch features + anchor embeddings -> Texlet posterior.
    // `eps` enables reparameterized sampling; null means latent = mean.
    Posterior encode_stack(nn::Tape& t, nn::Value pooled, const nn::Tensor& posemb,
                           const nn::Tensor* eps) {
        require(posemb.rows() == t.val(pooled).rows(), "anchor/patch count mismatch");
        nn::Value x = nn::concat_cols(t, pooled, t.constant(posemb));
        x = nn::linear(t, x, params_, "enc3d.in", cfg_.d_phi + cfg_.pos_dims, cfg_.width);
        for (int i = 0; i < cfg_.enc_layers; ++i)
            x = nn::transformer_block(t, x, params_, "enc3d.layer" + std::to_string(i),
                                      cfg_.width, cfg_.heads);
        x = nn::layer_norm_p(t, x, params_, "enc3d.ln", cfg_.width);
        Posterior post;
        post.mean = nn::linear(t, x, params_, "enc3d.mean", cfg_.width, cfg_.d_latent);
        // zero-initialized head keeps the posterior near unit variance at init
        post.logvar = nn::clamp(t, nn::linear(t, x, params_, "enc3d.logvar", cfg_.width,
                                              cfg_.d_latent, nn::Init::Zeros),
                                cfg_.logvar_lo, cfg_.logvar_hi);
        if (eps) {
            require(eps->rows() == t.val(post.mean).rows() && eps->cols() == cfg_.d_latent,
                    "eps shape mismatch");
            nn::Value sigma = nn::exp_op(t, nn::scale(t, post.logvar, 0.5));
            post.latent = nn::add(t, post.mean, nn::mul(t, sigma, t.constant(*eps)));
        } else {
            post.latent = post.mean;
        }
        return post;
    }

    // Texlets [N x d] -> reconstructed pooled features [N x d_phi].
    nn::Value decode_stack(nn::Tape& t, nn::Value latents) {
        nn::Value x = nn::linear(t, latents, params_, "dec3d.in", cfg_.d_latent, cfg_.width);
        for (int i = 0; i < cfg_.dec_layers; ++i)
            x = nn::transformer_block(t, x, params_, "dec3d.layer" + std::to_string(i),
                                      cfg_.width, cfg_.heads);
        x = nn::layer_norm_p(t, x, params_, "dec3d.ln", cfg_.width);
        return nn::linear(t, x, params_, "dec3d.out", cfg_.width, cfg_.d_phi);
    }

    // Feature row [1 x d_phi] -> patch image row [1 x R^2*3] in [0,1].
    nn::Value decode_patch(nn::Tape& t, nn::Value feat_row) {
        nn::Value x = nn::linear(t, feat_row, params_, "dec2d.expand", cfg_.d_phi,
                                 cfg_.tokens() * cfg_.d_phi);
        x = nn::reshape(t, x, {cfg_.tokens(), cfg_.d_phi});
        x = nn::add(t, x, t.param("dec2d.pos"));
        x = nn::transformer_block(t, x, params_, "dec2d.block", cfg_.d_phi, cfg_.heads);
        x = nn::linear(t, x, params_, "dec2d.out", cfg_.d_phi, block_elems());
        x = nn::sigmoid(t, x);
        return nn::reshape(t, nn::gather_fixed(t, x, from_blocks_, {1, cfg_.patch_elems()}),
                           {1, cfg_.patch_elems()});
    }

    // --- inference wrappers (fresh tape, values only) ---

    nn::Tensor encode_2d(const TexturePatch& patch) {
        check_patch(patch);
        nn::Tape t(&params_);
        return t.val(encode_patch(t, t.constant(patch_to_tensor(patch))));
    }

    TexletSet encode(const std::vector<TexturePatch>& patches,
                     const std::vector<PatchAnchor>& anchors, const nn::Tensor* eps = nullptr) {
        require(!patches.empty() && patches.size() == anchors.size(),
                "encode: patch/anchor count mismatch");
        nn::Tape t(&params_);
        std::vector<nn::Value> pooled;
        pooled.reserve(patches.size());
        for (const TexturePatch& p : patches) {
            check_patch(p);
            pooled.push_back(nn::mean_rows(t, encode_patch(t, t.constant(patch_to_tensor(p)))));
        }
        nn::Value stack = nn::concat_rows(t, pooled);
        Posterior post = encode_stack(t, stack, anchors_embedding(anchors, cfg_.pos_dims), eps);
        TexletSet set;
        set.latents = t.val(post.latent);
        set.posterior_mean = t.val(post.mean);
        set.posterior_logvar = t.val(post.logvar);
        set.anchors = anchors;
        return set;
    }

    std::vector<ImageRGB> decode(const TexletSet& set) {
        nn::Tape t(&params_);
        nn::Value phi = decode_stack(t, t.constant(set.latents));
        std::vector<ImageRGB> out;
        out.reserve(set.count());
        for (int i = 0; i < set.count(); ++i) {
            nn::Value row = nn::slice_rows(t, phi, i, i + 1);
            out.push_back(tensor_to_patch_image(t.val(decode_patch(t, row)), cfg_.patch_size));
        }
        return out;
    }

    std::shared_ptr<const std::vector<int>> block_gather() const { return to_blocks_; }

private:
    int block_elems() const { return cfg_.block_side() * cfg_.block_side() * 3; }

    void check_patch(const TexturePatch& p) const {
        require(p.image.width == cfg_.patch_size && p.image.height == cfg_.patch_size,
                "patch resolution does not match model patch_size");
    }

    void build_index_tables() {
        const int R = cfg_.patch_size, r = cfg_.feature_grid, B = cfg_.block_side();
        auto to_blocks = std::make_shared<std::vector<int>>();
        to_blocks->reserve((size_t)R * R * 3);
        for (int by = 0; by < r; ++by)
            for (int bx = 0; bx < r; ++bx)
                for (int ty = 0; ty < B; ++ty)
                    for (int tx = 0; tx < B; ++tx)
                        for (int c = 0; c < 3; ++c)
                            to_blocks->push_back(((by * B + ty) * R + (bx * B + tx)) * 3 + c);
        auto from_blocks = std::make_shared<std::vector<int>>((size_t)R * R * 3);
        for (size_t i = 0; i < to_blocks->size(); ++i) (*from_blocks)[(*to_blocks)[i]] = (int)i;
        to_blocks_ = to_blocks;
        from_blocks_ = from_blocks;
    }

    // Materialize every parameter with a throwaway single-patch forward so
    // checkpoints and gradient checks always see the complete set.
    void declare_all() {
        nn::Tape t(&params_);
        nn::Tensor img({1, cfg_.patch_elems()});
        nn::Value grid = encode_patch(t, t.constant(img));
        nn::Value pooled = nn::mean_rows(t, grid);
        nn::Tensor posemb({1, cfg_.pos_dims});
        nn::Tensor eps({1, cfg_.d_latent});
        Posterior post = encode_stack(t, pooled, posemb, &eps);
        nn::Value phi = decode_stack(t, post.latent);
        decode_patch(t, phi);
        params_.declare("enc2d.pos", {cfg_.tokens(), cfg_.d_phi}, nn::Init::TruncNormalFanIn);
        params_.declare("dec2d.pos", {cfg_.tokens(), cfg_.d_phi}, nn::Init::TruncNormalFanIn);
    }

    VaeConfig cfg_;
    nn::ModelParams params_;
    std::shared_ptr<const std::vector<int>> to_blocks_, from_blocks_;
};

// --- loss -----------------------------------------------------------------

struct VaeLossWeights {
    double alpha = 1.0;
    double beta = 0.1;
    double gamma = 1e-4;

    void validate() const {
        require(alpha >= 0 && beta >= 0 && gamma >= 0, "loss weights must be >= 0");
    }
};

struct VaeGraph {
    nn::Value pooled;        // [N x d_phi]
    nn::Value mean, logvar, latent;
    nn::Value phi_hat;       // [N x d_phi]
    nn::Value recon_stack;   // [N x R^2*3]
    nn::Value loss_total, loss_patch, loss_render, loss_kl;
};

// Bilinear tap table from patch image tensors (stacked [N x R^2*3]) to the
// covered atlas texels, in paste-map order; also returns the matching target
// values from the source atlas.
inline std::shared_ptr<nn::LinearGather> paste_taps(const PasteMap& pm, int patch_size,
                                                    int patch_count) {
    auto lg = std::make_shared<nn::LinearGather>();
    const int R = patch_size;
    lg->taps = 4;
    lg->out_shape = {(int)(pm.texels.size() * 3)};
    lg->index.reserve(pm.texels.size() * 12);
    lg->weight.reserve(pm.texels.size() * 12);
    const int64_t row_elems = (int64_t)R * R * 3;
    for (const auto& tex : pm.texels) {
        require(tex.patch >= 0 && tex.patch < patch_count, "paste map patch out of range");
        double fx = std::clamp((double)tex.px - 0.5, 0.0, (double)R - 1.0);
        double fy = std::clamp((double)tex.py - 0.5, 0.0, (double)R - 1.0);
        int x0 = std::min((int)fx, R - 1), y0 = std::min((int)fy, R - 1);
        int x1 = std::min(x0 + 1, R - 1), y1 = std::min(y0 + 1, R - 1);
        double tx = fx - x0, ty = fy - y0;
        int64_t base = (int64_t)tex.patch * row_elems;
        for (int c = 0; c < 3; ++c) {
            lg->index.push_back((int)(base + ((int64_t)y0 * R + x0) * 3 + c));
            lg->weight.push_back((1 - tx) * (1 - ty));
            lg->index.push_back((int)(base + ((int64_t)y0 * R + x1) * 3 + c));
            lg->weight.push_back(tx * (1 - ty));
            lg->index.push_back((int)(base + ((int64_t)y1 * R + x0) * 3 + c));
            lg->weight.push_back((1 - tx) * ty);
            lg->index.push_back((int)(base + ((int64_t)y1 * R + x1) * 3 + c));
            lg->weight.push_back(tx * ty);
        }
    }
    return lg;
}

inline nn::Tensor paste_targets(const PasteMap& pm, const ImageRGB& atlas) {
    nn::Tensor t({(int)(pm.texels.size() * 3)});
    size_t i = 0;
    for (const auto& tex : pm.texels) {
        const float* p = atlas.at(tex.x, tex.y);
        t.data[i++] = p[0];
        t.data[i++] = p[1];
        t.data[i++] = p[2];
    }
    return t;
}

// Full training graph: encode -> sample -> decode -> three-term loss.
// The patch-feature targets are detached so this term trains the 3D stages.
inline VaeGraph build_vae_graph(nn::Tape& t, TexletVae& vae,
                                const std::vector<TexturePatch>& patches,
                                const std::vector<PatchAnchor>& anchors, const nn::Tensor* eps,
                                const std::shared_ptr<nn::LinearGather>& render_taps,
                                const nn::Tensor& atlas_target, const VaeLossWeights& w) {
    w.validate();
    require(patches.size() == anchors.size() && !patches.empty(), "bad dataset item");
    const VaeConfig& cfg = vae.config();

    VaeGraph g;
    std::vector<nn::Value> pooled;
    pooled.reserve(patches.size());
    for (const TexturePatch& p : patches)
        pooled.push_back(nn::mean_rows(t, vae.encode_patch(t, t.constant(patch_to_tensor(p)))));
    g.pooled = nn::concat_rows(t, pooled);

    TexletVae::Posterior post =
        vae.encode_stack(t, g.pooled, anchors_embedding(anchors, cfg.pos_dims), eps);
    g.mean = post.mean;
    g.logvar = post.logvar;
    g.latent = post.latent;
    g.phi_hat = vae.decode_stack(t, g.latent);

    std::vector<nn::Value> recon;
    recon.reserve(patches.size());
    for (size_t i = 0; i < patches.size(); ++i) {
        nn::Value row = nn::slice_cols(t, nn::transpose(t, nn::slice_cols(
            t, nn::transpose(t, g.phi_hat), (int)i, (int)i + 1)), 0, cfg.d_phi);
        recon.push_back(vae.decode_patch(t, row));
    }
    g.recon_stack = nn::concat_rows(t, recon);

    g.loss_patch = nn::mse(t, g.phi_hat, nn::detach(t, g.pooled));
    g.loss_render =
        nn::mse(t, nn::weighted_gather(t, g.recon_stack, render_taps), t.constant(atlas_target));
    // KL(N(mu, sigma^2) || N(0,1)) averaged over all latent entries
    nn::Value kl_inner =
        nn::add(t, nn::add(t, nn::mul(t, g.mean, g.mean), nn::exp_op(t, g.logvar)),
                nn::add_const(t, nn::neg(t, g.logvar), -1.0));
    g.loss_kl = nn::mean_all(t, nn::scale(t, kl_inner, 0.5));

    g.loss_total = nn::add(t, nn::add(t, nn::scale(t, g.loss_patch, w.alpha),
                                      nn::scale(t, g.loss_render, w.beta)),
                           nn::scale(t, g.loss_kl, w.gamma));
    return g;
}

// --- training ----------------------------------------------------------------

struct VaeTrainItem {
    std::vector<TexturePatch> patches;
    std::vector<PatchAnchor> anchors;
    std::shared_ptr<nn::LinearGather> render_taps;
    nn::Tensor atlas_target;
};

struct TrainOptions {
    int steps = 2000;
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999;
    double weight_decay = 0.0;
    uint64_t seed = 0;
    int checkpoint_every = 0;      // 0 = only at the end
    std::string checkpoint_path;   // empty = no checkpoints
    std::ostream* log = nullptr;
};

struct LossRow {
    int step;
    double total, patch, render, kl;
};

inline std::vector<LossRow> train_vae(TexletVae& vae, const std::vector<VaeTrainItem>& items,
                                      const VaeLossWeights& weights, const TrainOptions& opts) {
    require(!items.empty(), "train_vae: empty dataset");
    std::vector<LossRow> curve;
    nn::AdamWConfig adam{opts.lr, opts.beta1, opts.beta2, 1e-8, opts.weight_decay};
    for (int step = 0; step < opts.steps; ++step) {
        const VaeTrainItem& item = items[step % items.size()];
        int n = (int)item.patches.size();
        Rng rng(hash_combine(subsystem_seed(opts.seed, "vae.eps"), (uint64_t)step));
        nn::Tensor eps({n, vae.config().d_latent});
        for (double& x : eps.data) x = rng.normal();

        nn::Tape tape(&vae.params());
        VaeGraph g = build_vae_graph(tape, vae, item.patches, item.anchors, &eps,
                                     item.render_taps, item.atlas_target, weights);
        LossRow row{step, tape.val(g.loss_total).data[0], tape.val(g.loss_patch).data[0],
                    tape.val(g.loss_render).data[0], tape.val(g.loss_kl).data[0]};
        if (!std::isfinite(row.total))
            fail("non-finite VAE loss at step " + std::to_string(step) + " (item " +
                 std::to_string(step % items.size()) + "): patch=" + std::to_string(row.patch) +
                 " render=" + std::to_string(row.render) + " kl=" + std::to_string(row.kl));
        curve.push_back(row);
        if (opts.log)
            (*opts.log) << "step " << row.step << " loss " << row.total << " patch " << row.patch
                        << " render " << row.render << " kl " << row.kl << "\n";

        vae.params().zero_grad();
        tape.backward(g.loss_total);
        nn::adamw_step(vae.params(), adam);

        if (!opts.checkpoint_path.empty() && opts.checkpoint_every > 0 &&
            (step + 1) % opts.checkpoint_every == 0)
            nn::save_checkpoint(vae.params(), opts.checkpoint_path);
    }
    if (!opts.checkpoint_path.empty()) nn::save_checkpoint(vae.params(), opts.checkpoint_path);
    return curve;
}

// --- TXLT serialization ---------------------------------------------------------

inline void save_texlets(const TexletSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot write texlet file: " + path);
    out.write("TXLT", 4);
    nn::detail::write_pod<uint32_t>(out, 1);
    nn::detail::write_pod<uint64_t>(out, (uint64_t)set.count());
    nn::detail::write_pod<uint64_t>(out, (uint64_t)set.dim());
    out.write(reinterpret_cast<const char*>(set.latents.data.data()),
              (std::streamsize)(set.latents.data.size() * sizeof(double)));
    for (const PatchAnchor& a : set.anchors)
        for (double v : {a.position.x, a.position.y, a.position.z, a.normal.x, a.normal.y,
                         a.normal.z})
            nn::detail::write_pod<double>(out, v);
    require(bool(out), "write failed for texlet file: " + path);
}

inline TexletSet load_texlets(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open texlet file: " + path);
    char magic[4];
    in.read(magic, 4);
    require(bool(in) && std::memcmp(magic, "TXLT", 4) == 0, "not a TXLT file: " + path);
    uint32_t version = nn::detail::read_pod<uint32_t>(in);
    require(version == 1, "unsupported TXLT version in " + path);
    int n = (int)nn::detail::read_pod<uint64_t>(in);
    int d = (int)nn::detail::read_pod<uint64_t>(in);
    TexletSet set;
    set.latents = nn::Tensor({n, d});
    in.read(reinterpret_cast<char*>(set.latents.data.data()),
            (std::streamsize)(set.latents.data.size() * sizeof(double)));
    set.posterior_mean = set.latents;
    set.posterior_logvar = nn::Tensor({n, d});
    for (int i = 0; i < n; ++i) {
        PatchAnchor a;
        a.position.x = nn::detail::read_pod<double>(in);
        a.position.y = nn::detail::read_pod<double>(in);
        a.position.z = nn::detail::read_pod<double>(in);
        a.normal.x = nn::detail::read_pod<double>(in);
        a.normal.y = nn::detail::read_pod<double>(in);
        a.normal.z = nn::detail::read_pod<double>(in);
        set.anchors.push_back(a);
    }
    require(bool(in), "truncated TXLT file: " + path);
    return set;
}

}  // namespace texlet
