#pragma once

// End-to-end workflow: HDM snapshots -> POD -> ROM -> beta training ->
// SROM ensembles -> prediction intervals and coverage. Each stage reads
// its inputs from the output directory and writes its own artifacts, so
// train, sample, predict and report run separately reproduce `run`.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sspod/config.hpp"
#include "sspod/ensemble.hpp"
#include "sspod/errors.hpp"
#include "sspod/io.hpp"
#include "sspod/problems.hpp"
#include "sspod/random.hpp"
#include "sspod/rom.hpp"
#include "sspod/sampler.hpp"
#include "sspod/subspace.hpp"
#include "sspod/training.hpp"

#ifndef SSPOD_VERSION
#define SSPOD_VERSION "0.0.0"
#endif

namespace sspod {

inline constexpr int kReportSchemaVersion = 1;

/// One predicted quantity on its grid. `observed` lists grid positions that
/// also carry a noisy measurement (`observed_values`).
struct QoiBlock {
    std::string name;
    std::string grid_label;
    Vector grid;
    Vector truth;
    Vector rom;
    std::vector<Index> observed;
    Vector observed_values;
};

/// A problem supplies snapshots, the training observables and the QoIs,
/// and evaluates SROM predictions for reduced draws U (r x k).
class Problem {
public:
    virtual ~Problem() = default;

    virtual const Matrix& snapshots() const = 0;
    /// Stage-one reduction onto V_r and the reference ROM on its first k modes.
    virtual void attach(const Matrix& modes, Index k) = 0;
    virtual std::vector<DistanceObservables> observables() const = 0;
    /// Predictions on the training observation grids, one per observation set.
    virtual std::vector<Vector> observe(const SubspaceBasis& u) const = 0;
    virtual std::vector<QoiBlock> blocks() const = 0;
    /// All QoI blocks of one realization, concatenated in block order.
    virtual Vector realize(const SubspaceBasis& u) const = 0;
};

namespace detail {

inline Matrix leading_identity(Index r, Index k) { return Matrix::Identity(r, k); }

inline Vector node_grid(Index n) { return Vector::LinSpaced(n, 0.0, 1.0); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Nonlinear parametric static problem: K x + alpha x^3 = f(mu), mu in [0,1]^5.
// Training compares SROM and ROM with the HDM at the snapshot parameters;
// prediction is at a held-out mu.

class CubicParametricProblem : public Problem {
public:
    CubicParametricProblem(const CubicParametricParams& p, std::uint64_t seed)
        : params_(p), problem_(build_cubic_problem(p.n, p.alpha)) {
        newton_ = NewtonOptions{p.newton_tolerance, p.newton_max_iterations};
        const Matrix design = lhs_sample(5, p.snapshots, RandomStream{derive_seed(seed, "lhs"), 0});
        params_list_.reserve(static_cast<std::size_t>(p.snapshots));
        snapshots_.resize(p.n, p.snapshots);
        Vector guess = Vector::Zero(p.n);
        for (Index j = 0; j < p.snapshots; ++j) {
            Vector mu = design.row(j).transpose();
            // a design point at the origin would leave the force undefined
            if (mu.cwiseAbs().maxCoeff() == 0.0) mu(0) = 1e-12;
            guess = newton_cubic(problem_.system, mu, guess, newton_).solution;
            snapshots_.col(j) = guess;
            params_list_.push_back(std::move(mu));
        }
        truth_ = newton_cubic(problem_.system, p.mu_test, Vector::Zero(p.n), newton_).solution;
    }

    const Matrix& snapshots() const override { return snapshots_; }

    void attach(const Matrix& modes, Index k) override {
        staged_ = two_stage_reduce(problem_.system, modes);
        const auto rom = inner_reduce(staged_, SubspaceBasis{detail::leading_identity(modes.cols(), k)});
        rom_train_.clear();
        for (const Vector& mu : params_list_) {
            rom_train_.push_back(rom.basis * newton_rom_cubic(rom, mu, Vector::Zero(k), newton_).solution);
        }
        rom_test_ = rom.basis * newton_rom_cubic(rom, params_.mu_test, Vector::Zero(k), newton_).solution;
    }

    std::vector<DistanceObservables> observables() const override {
        std::vector<DistanceObservables> out;
        for (std::size_t j = 0; j < params_list_.size(); ++j) {
            out.push_back({rom_train_[j], snapshots_.col(static_cast<Index>(j)), Vector()});
        }
        return out;
    }

    std::vector<Vector> observe(const SubspaceBasis& u) const override {
        const auto rom = inner_reduce(staged_, u);
        std::vector<Vector> out;
        out.reserve(params_list_.size());
        for (std::size_t j = 0; j < params_list_.size(); ++j) {
            const Vector guess = rom.basis.transpose() * rom_train_[j];
            out.push_back(rom.basis * newton_rom_cubic(rom, params_list_[j], guess, newton_).solution);
        }
        return out;
    }

    std::vector<QoiBlock> blocks() const override {
        return {QoiBlock{"displacement", "x", detail::node_grid(params_.n), truth_, rom_test_, {}, Vector()}};
    }

    Vector realize(const SubspaceBasis& u) const override {
        const auto rom = inner_reduce(staged_, u);
        const Vector guess = rom.basis.transpose() * rom_test_;
        return rom.basis * newton_rom_cubic(rom, params_.mu_test, guess, newton_).solution;
    }

private:
    CubicParametricParams params_;
    CubicProblem problem_;
    NewtonOptions newton_;
    std::vector<Vector> params_list_;
    Matrix snapshots_;
    Vector truth_;
    StagedOperators<CubicOperators> staged_;
    std::vector<Vector> rom_train_;
    Vector rom_test_;
};

// ---------------------------------------------------------------------------
// Linear static problem with model-form error: the truth solves a perturbed
// stiffness K + K_eps; sparse noisy sensors observe it. Snapshots come from
// independent perturbations at the same relative magnitude.

class StaticHdmErrorProblem : public Problem {
public:
    StaticHdmErrorProblem(const StaticHdmErrorParams& p, std::uint64_t seed)
        : params_(p), spectral_(build_spectral_stiffness(p.n)) {
        force_ = modal_force(spectral_, p.force_weights);
        const StiffnessPerturbation truth_pert =
            perturb_stiffness(spectral_, p.stiffness_ratio, RandomStream{derive_seed(seed, "truth"), 0});
        truth_ = spectral_.solve(truth_pert.perturbed(spectral_.eigvals), force_);
        sensors_ = observe_sparse(p.n, p.sensors);
        noisy_ = add_noise(gather(truth_, sensors_), p.noise_level, RandomStream{derive_seed(seed, "noise"), 0});

        Matrix weights;
        if (p.snapshot_force == "lhs") weights = lhs_sample(5, p.perturbations, RandomStream{derive_seed(seed, "lhs"), 0});
        const std::uint64_t pert_seed = derive_seed(seed, "perturb");
        snapshots_.resize(p.n, p.perturbations);
        for (Index i = 0; i < p.perturbations; ++i) {
            const StiffnessPerturbation pert =
                perturb_stiffness(spectral_, p.stiffness_ratio, RandomStream{pert_seed, static_cast<std::uint64_t>(i)});
            Vector f = force_;
            if (p.snapshot_force == "lhs") {
                Vector mu = weights.row(i).transpose();
                if (mu.cwiseAbs().maxCoeff() == 0.0) mu(0) = 1e-12;
                f = modal_force(spectral_, mu);
            }
            snapshots_.col(i) = spectral_.solve(pert.perturbed(spectral_.eigvals), f);
        }
        system_ = LinearStaticSystem{spectral_.dense(), force_, spectral_.constraints()};
    }

    const Matrix& snapshots() const override { return snapshots_; }

    void attach(const Matrix& modes, Index k) override {
        staged_ = two_stage_reduce(system_, modes);
        sensor_modes_ = gather_rows(modes, sensors_);
        modes_ = modes;
        const Matrix lead = detail::leading_identity(modes.cols(), k);
        rom_ = modes * (lead * solve_linear_static(galerkin_reduce(staged_.operators, SubspaceBasis{lead})));
    }

    std::vector<DistanceObservables> observables() const override {
        return {DistanceObservables{gather(rom_, sensors_), noisy_.values, Vector()}};
    }

    // Reduced solve entirely in r coordinates; only the sensor rows are lifted.
    std::vector<Vector> observe(const SubspaceBasis& u) const override {
        return {Vector(sensor_modes_ * reduced_state(u))};
    }

    std::vector<QoiBlock> blocks() const override {
        std::vector<Index> observed = sensors_;
        return {QoiBlock{"displacement", "x", detail::node_grid(params_.n), truth_, rom_, observed, noisy_.values}};
    }

    Vector realize(const SubspaceBasis& u) const override { return modes_ * reduced_state(u); }

    double noise_sigma() const { return noisy_.sigma; }

private:
    Vector reduced_state(const SubspaceBasis& u) const {
        return u.basis * solve_linear_static(galerkin_reduce(staged_.operators, u));
    }

    StaticHdmErrorParams params_;
    SpectralStiffness spectral_;
    Vector force_;
    Vector truth_;
    std::vector<Index> sensors_;
    NoisyObservation noisy_;
    Matrix snapshots_;
    LinearStaticSystem system_;
    StagedOperators<LinearStaticSystem> staged_;
    Matrix sensor_modes_;
    Matrix modes_;
    Vector rom_;
};

// ---------------------------------------------------------------------------
// Linear structural dynamics on the lumped surrogate. Snapshots are the HDM
// displacement history; training uses the velocity at one DoF over time.

class DynamicsSurrogateProblem : public Problem {
public:
    explicit DynamicsSurrogateProblem(const DynamicsSurrogateParams& p) : params_(p), system_(surrogate_dynamics(p.spec)) {
        hdm_ = newmark_integrate(system_, p.dt, p.t_end, p.newmark);
        extractors_ = {QoiExtractor::dof(p.qoi_dof, 1, hdm_.times), QoiExtractor::dof(p.qoi_dof, 2, hdm_.times),
                       QoiExtractor::dof(p.qoi_dof, 0, hdm_.times), QoiExtractor::dof(p.other_dof, 1, hdm_.times)};
        names_ = {"velocity", "acceleration", "displacement", "velocity_other"};
        weights_ = trapezoid_weights(hdm_.times);
    }

    const Matrix& snapshots() const override { return hdm_.x; }

    void attach(const Matrix& modes, Index k) override {
        staged_ = two_stage_reduce(system_, modes);
        modes_ = modes;
        const SubspaceBasis lead{detail::leading_identity(modes.cols(), k)};
        rom_ = extract_all(lead);
    }

    std::vector<DistanceObservables> observables() const override {
        return {DistanceObservables{rom_[0], extractors_[0].extract(hdm_), weights_}};
    }

    std::vector<Vector> observe(const SubspaceBasis& u) const override {
        const Matrix w = modes_ * u.basis;
        return {extractors_[0].extract(w, integrate(u))};
    }

    std::vector<QoiBlock> blocks() const override {
        std::vector<QoiBlock> out;
        for (std::size_t b = 0; b < extractors_.size(); ++b) {
            out.push_back({names_[b], "t", hdm_.times, extractors_[b].extract(hdm_), rom_[b], {}, Vector()});
        }
        return out;
    }

    Vector realize(const SubspaceBasis& u) const override {
        const std::vector<Vector> parts = extract_all(u);
        Index total = 0;
        for (const Vector& v : parts) total += v.size();
        Vector out(total);
        Index offset = 0;
        for (const Vector& v : parts) {
            out.segment(offset, v.size()) = v;
            offset += v.size();
        }
        return out;
    }

private:
    Trajectory integrate(const SubspaceBasis& u) const {
        return newmark_integrate(galerkin_reduce(staged_.operators, u), params_.dt, params_.t_end, params_.newmark);
    }

    std::vector<Vector> extract_all(const SubspaceBasis& u) const {
        const Trajectory tr = integrate(u);
        const Matrix w = modes_ * u.basis;
        std::vector<Vector> out;
        for (const QoiExtractor& e : extractors_) out.push_back(e.extract(w, tr));
        return out;
    }

    DynamicsSurrogateParams params_;
    LinearDynamicSystem system_;
    Trajectory hdm_;
    std::vector<QoiExtractor> extractors_;
    std::vector<std::string> names_;
    Vector weights_;
    StagedOperators<LinearDynamicSystem> staged_;
    Matrix modes_;
    std::vector<Vector> rom_;
};

inline std::unique_ptr<Problem> make_problem(const RunConfig& cfg) {
    const ProblemConfig& p = cfg.problem;
    if (p.kind == "cubic_parametric") return std::make_unique<CubicParametricProblem>(p.cubic, cfg.seed);
    if (p.kind == "static_hdm_error") return std::make_unique<StaticHdmErrorProblem>(p.hdm_error, cfg.seed);
    if (p.kind == "dynamics_surrogate") return std::make_unique<DynamicsSurrogateProblem>(p.dynamics);
    throw ConfigError("problem.kind", "unknown problem kind '" + p.kind + "'");
}

// ---------------------------------------------------------------------------
// Stages

struct StageContext {
    RunConfig config;
    fs::path out;
    unsigned threads = 1;
    bool verbose = false;
    std::ostream* log = &std::cerr;

    void note(const std::string& msg) const {
        if (verbose && log != nullptr) *log << "[sspod] " << msg << '\n';
    }
};

namespace detail {

inline std::uint64_t training_seed(const RunConfig& c) { return derive_seed(c.seed, "train"); }
inline std::uint64_t refinement_seed(const RunConfig& c) { return derive_seed(c.seed, "refine"); }
inline std::uint64_t ensemble_seed(const RunConfig& c) { return derive_seed(c.seed, "ensemble"); }

inline void require_hash(const fs::path& path, const std::string& found, const std::string& expected) {
    if (found != expected) {
        throw ArtifactError(path, "stale artifact (config hash " + found + ", current config " + expected + ")");
    }
}

/// Wall time of one stage, merged into timings.json (never into report.json,
/// which must stay byte-stable across reruns).
inline void record_timing(const StageContext& ctx, const std::string& stage, double seconds) {
    const fs::path path = ctx.out / "timings.json";
    json t = json::object();
    if (fs::exists(path)) {
        try {
            t = read_json(path);
        } catch (const ArtifactError&) {
            t = json::object();
        }
    }
    t["config_hash"] = ctx.config.hash();
    t["seconds"][stage] = seconds;
    write_json(path, t);
}

class StageTimer {
public:
    StageTimer(const StageContext& ctx, std::string stage)
        : ctx_(ctx), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
    void done() const {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        record_timing(ctx_, stage_, s);
        ctx_.note(stage_ + " finished in " + format_double(s) + " s");
    }

private:
    const StageContext& ctx_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
};

struct TrainingFile {
    Index k = 0;
    Index r = 0;
    Index m = 0;
    double beta_integer = 0.0;
    std::optional<double> beta_refined;
};

/// Ensemble labels and their beta: the integer stage always, the refined
/// beta when refinement ran.
inline std::vector<std::pair<std::string, double>> ensemble_labels(const TrainingFile& t) {
    std::vector<std::pair<std::string, double>> out{{"integer", t.beta_integer}};
    if (t.beta_refined) out.emplace_back("refined", *t.beta_refined);
    return out;
}

inline TrainingFile read_training(const StageContext& ctx) {
    const fs::path path = ctx.out / "training.json";
    const json j = read_json(path);
    try {
        require_hash(path, j.at("training_hash").get<std::string>(), ctx.config.training_hash());
        TrainingFile t;
        t.k = j.at("k").get<Index>();
        t.r = j.at("r").get<Index>();
        t.m = j.at("snapshot_count").get<Index>();
        t.beta_integer = j.at("integer").at("beta").get<double>();
        if (j.contains("refined") && !j.at("refined").is_null()) t.beta_refined = j.at("refined").at("beta").get<double>();
        return t;
    } catch (const json::exception& e) {
        throw ArtifactError(path, std::string("malformed artifact (") + e.what() + ")");
    }
}

inline Vector read_singular_values(const StageContext& ctx, Index r) {
    const fs::path path = ctx.out / "pod_spectrum.csv";
    const CsvTable t = read_csv(path);
    require_hash(path, t.config_hash, ctx.config.training_hash());
    const Vector sv = t.numeric("singular_value");
    if (sv.size() != r) throw ArtifactError(path, "spectrum length differs from training.json");
    return sv;
}

inline Matrix read_modes(const StageContext& ctx, const TrainingFile& t) {
    const fs::path path = ctx.out / "modes.bin";
    MatrixHeader h;
    Matrix modes = read_matrix(path, &h);
    require_hash(path, h.config_hash, ctx.config.training_hash());
    if (modes.cols() != t.r) throw ArtifactError(path, "mode count differs from training.json");
    return modes;
}

inline Vector stack(const std::vector<Vector>& parts) {
    Index total = 0;
    for (const Vector& v : parts) total += v.size();
    Vector out(total);
    Index offset = 0;
    for (const Vector& v : parts) {
        out.segment(offset, v.size()) = v;
        offset += v.size();
    }
    return out;
}

inline DistanceObservables pool(const std::vector<DistanceObservables>& sets) {
    std::vector<Vector> ref, truth, w;
    bool weighted = false;
    for (const DistanceObservables& o : sets) {
        ref.push_back(o.reference);
        truth.push_back(o.truth);
        weighted = weighted || o.weights.size() != 0;
    }
    if (weighted) {
        for (const DistanceObservables& o : sets) {
            w.push_back(o.weights.size() != 0 ? o.weights : Vector(Vector::Ones(o.reference.size())));
        }
    }
    return {stack(ref), stack(truth), weighted ? stack(w) : Vector()};
}

inline void write_trace(const fs::path& path, const std::string& hash, const std::vector<TraceEntry>& trace) {
    CsvWriter w(hash, {"iteration", "beta", "f_estimate", "mc_samples", "seed"});
    for (const TraceEntry& e : trace) {
        w.row(std::vector<std::string>{std::to_string(e.iteration), format_double(e.beta), format_double(e.value),
                                       std::to_string(e.mc_samples), std::to_string(e.seed)});
    }
    w.save(path);
}

}  // namespace detail

/// Steps 1-4: snapshots, POD, ROM, beta training (plus optional refinement).
inline void stage_train(const StageContext& ctx) {
    const detail::StageTimer timer(ctx, "train");
    const RunConfig& cfg = ctx.config;
    const std::string hash = cfg.training_hash();
    fs::create_directories(ctx.out);

    ctx.note("building problem '" + cfg.problem.kind + "' and its snapshots");
    std::unique_ptr<Problem> problem = make_problem(cfg);
    const Matrix& snaps = problem->snapshots();
    const Index m = snaps.cols();
    write_matrix(ctx.out / "snapshots.bin", snaps, hash);

    const PodDecomposition pod = compact_svd(cfg.pod.center ? center(snaps).centered : snaps);
    const Index r = pod.rank;
    const Index k = cfg.pod.k ? *cfg.pod.k : select_rank(pod.singular_values, *cfg.pod.energy_threshold);
    if (k > r) {
        throw RankError("pod.k = " + std::to_string(k) + " exceeds the snapshot rank r = " + std::to_string(r));
    }
    write_matrix(ctx.out / "modes.bin", pod.modes, hash);
    {
        const Vector eig = pod.covariance_eigenvalues(m);
        const double total = pod.singular_values.squaredNorm();
        CsvWriter w(hash, {"index", "singular_value", "covariance_eigenvalue", "energy_fraction", "cumulative_energy"});
        double cumulative = 0.0;
        for (Index i = 0; i < r; ++i) {
            const double e = pod.singular_values(i) * pod.singular_values(i) / total;
            cumulative += e;
            w.row(std::vector<std::string>{std::to_string(i + 1), format_double(pod.singular_values(i)),
                                           format_double(eig(i)), format_double(e), format_double(cumulative)});
        }
        w.save(ctx.out / "pod_spectrum.csv");
    }
    ctx.note("POD: m = " + std::to_string(m) + ", r = " + std::to_string(r) + ", k = " + std::to_string(k));

    problem->attach(pod.modes, k);
    const bool pooled = cfg.training.aggregation == "pooled";
    const std::vector<DistanceObservables> obs =
        pooled ? std::vector<DistanceObservables>{detail::pool(problem->observables())} : problem->observables();
    const SsppcaModel base = SsppcaModel::from_pod(pod, m, k, static_cast<double>(k));

    TrainingConfig tc;
    tc.mc_samples = cfg.training.mc_samples;
    tc.beta_lower = cfg.training.beta_min ? *cfg.training.beta_min : static_cast<double>(k);
    tc.beta_upper = cfg.training.beta_max ? *cfg.training.beta_max : 10.0 * static_cast<double>(r);
    if (tc.beta_lower < static_cast<double>(k)) throw ConfigError("training.beta_min", "must be >= k");
    if (tc.beta_upper < tc.beta_lower) throw ConfigError("training.beta_max", "must be >= the lower beta bound");
    tc.tolerance = cfg.training.tolerance;
    tc.max_iterations = cfg.training.max_iterations;
    tc.refinement = cfg.training.refinement;

    auto make_evaluator = [&](std::size_t mc, std::uint64_t seed) -> ObjectiveEvaluator {
        return [&, mc, seed](double beta) {
            SsppcaModel model = base;
            model.beta = beta;
            model.validate();
            auto predict = [&](double, const RandomStream& s) {
                std::vector<Vector> u = problem->observe(sample_reduced_any(model, s));
                if (pooled) return std::vector<Vector>{detail::stack(u)};
                return u;
            };
            const ObjectiveEstimate e = estimate_objective(beta, predict, obs, mc, seed, ctx.threads);
            ctx.note("f(" + format_double(beta) + ") = " + format_double(e.value) + " +- " + format_double(e.std_error));
            return e;
        };
    };

    ObjectiveCache cache;
    const TrainingResult integer =
        optimize_beta(tc, make_evaluator(tc.mc_samples, detail::training_seed(cfg)), &cache);
    detail::write_trace(ctx.out / "train_trace.csv", hash, integer.trace);
    {
        CsvWriter w(hash, {"beta", "f_estimate", "mc_samples", "seed"});
        for (const auto& [b, e] : cache.entries()) {
            w.row(std::vector<std::string>{std::to_string(b), format_double(e.value), std::to_string(e.samples),
                                           std::to_string(e.seed)});
        }
        w.save(ctx.out / "objective_cache.csv");
    }
    ctx.note("integer beta = " + format_double(integer.beta));

    json tj;
    tj["schema_version"] = kReportSchemaVersion;
    tj["training_hash"] = hash;
    tj["k"] = k;
    tj["r"] = r;
    tj["snapshot_count"] = m;
    tj["centered"] = cfg.pod.center;
    tj["beta_bounds"] = {tc.beta_lower, tc.beta_upper};
    tj["integer"] = {{"beta", integer.beta},
                     {"objective", integer.value},
                     {"converged", integer.converged},
                     {"objective_evaluations", integer.objective_evaluations},
                     {"mc_samples", tc.mc_samples},
                     {"seed", detail::training_seed(cfg)}};
    tj["refined"] = nullptr;
    if (tc.refinement.enabled) {
        const TrainingResult refined =
            refine_beta_real(integer.beta, tc, make_evaluator(tc.refinement.mc_samples, detail::refinement_seed(cfg)));
        detail::write_trace(ctx.out / "refine_trace.csv", hash, refined.trace);
        tj["refined"] = {{"beta", refined.beta},
                         {"objective", refined.value},
                         {"converged", refined.converged},
                         {"objective_evaluations", refined.objective_evaluations},
                         {"mc_samples", tc.refinement.mc_samples},
                         {"seed", detail::refinement_seed(cfg)}};
        ctx.note("refined beta = " + format_double(refined.beta));
    }
    write_json(ctx.out / "training.json", tj);
    timer.done();
}

/// Step 5a: draw the ensemble subspaces U_i (r x k) for each trained beta.
inline void stage_sample(const StageContext& ctx) {
    const detail::StageTimer timer(ctx, "sample");
    const RunConfig& cfg = ctx.config;
    const detail::TrainingFile t = detail::read_training(ctx);
    const Vector sv = detail::read_singular_values(ctx, t.r);
    PodDecomposition pod;
    pod.singular_values = sv;
    pod.rank = t.r;
    for (const auto& [label, beta] : detail::ensemble_labels(t)) {
        const SsppcaModel model = SsppcaModel::from_pod(pod, t.m, t.k, beta);
        const auto draws = sample_reduced_ensemble(model, cfg.ensemble.count, detail::ensemble_seed(cfg), ctx.threads);
        Matrix stack(t.r, t.k * static_cast<Index>(draws.size()));
        for (std::size_t i = 0; i < draws.size(); ++i) stack.middleCols(static_cast<Index>(i) * t.k, t.k) = draws[i].basis;
        write_matrix(ctx.out / ("samples_" + label + ".bin"), stack, cfg.hash());
        ctx.note("sampled " + std::to_string(draws.size()) + " subspaces at beta = " + format_double(beta));
    }
    timer.done();
}

/// Step 5b: SROM realizations for every stored draw, and per-QoI summaries.
inline void stage_predict(const StageContext& ctx) {
    const detail::StageTimer timer(ctx, "predict");
    const RunConfig& cfg = ctx.config;
    const std::string hash = cfg.hash();
    const detail::TrainingFile t = detail::read_training(ctx);
    const Matrix modes = detail::read_modes(ctx, t);

    std::vector<std::pair<std::string, Matrix>> stacks;
    for (const auto& [label, beta] : detail::ensemble_labels(t)) {
        const fs::path path = ctx.out / ("samples_" + label + ".bin");
        MatrixHeader h;
        Matrix stack = read_matrix(path, &h);
        detail::require_hash(path, h.config_hash, hash);
        if (stack.rows() != t.r || stack.cols() % t.k != 0) throw ArtifactError(path, "sample stack has the wrong shape");
        stacks.emplace_back(label, std::move(stack));
    }

    std::unique_ptr<Problem> problem = make_problem(cfg);
    problem->attach(modes, t.k);
    const std::vector<QoiBlock> blocks = problem->blocks();

    json drops = json::object();
    for (const auto& [label, stack] : stacks) {
        const auto count = static_cast<std::size_t>(stack.cols() / t.k);
        auto draw = [&, k = t.k](const RandomStream& s) {
            return SubspaceBasis{stack.middleCols(static_cast<Index>(s.stream_index) * k, k)};
        };
        auto solve = [&](const SubspaceBasis& u) { return problem->realize(u); };
        const EnsemblePrediction ens = run_srom(draw, solve, count, detail::ensemble_seed(cfg),
                                                EnsembleOptions{ctx.threads, cfg.ensemble.failure_policy});
        write_matrix(ctx.out / ("ensemble_" + label + ".bin"), ens.samples, hash);
        json d = json::array();
        for (std::size_t i = 0; i < ens.dropped.size(); ++i) {
            d.push_back({{"index", ens.dropped[i]}, {"reason", ens.drop_reasons[i]}});
        }
        drops[label] = d;

        std::vector<Index> widths;
        for (const QoiBlock& b : blocks) widths.push_back(b.grid.size());
        const auto parts = split_columns(ens, widths);
        for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
            const QoiBlock& b = blocks[bi];
            const PredictionSummary s = summarize(parts[bi], cfg.ensemble.level);
            CsvWriter w(hash, {b.grid_label, "mean", "std", "lower", "upper", "rom", "truth"});
            for (Index i = 0; i < b.grid.size(); ++i) {
                w.row(std::vector<double>{b.grid(i), s.mean(i), s.std(i), s.lower(i), s.upper(i), b.rom(i), b.truth(i)});
            }
            w.save(ctx.out / ("summary_" + label + "_" + b.name + ".csv"));
        }
        ctx.note("predicted " + std::to_string(ens.count()) + " realizations for '" + label + "'");
    }

    for (const QoiBlock& b : blocks) {
        if (b.observed.empty()) continue;
        CsvWriter w(hash, {"grid_index", b.grid_label, "observation"});
        for (std::size_t i = 0; i < b.observed.size(); ++i) {
            const Index g = b.observed[i];
            w.row(std::vector<std::string>{std::to_string(g), format_double(b.grid(g)),
                                           format_double(b.observed_values(static_cast<Index>(i)))});
        }
        w.save(ctx.out / ("observations_" + b.name + ".csv"));
    }

    json pj;
    pj["config_hash"] = hash;
    pj["level"] = cfg.ensemble.level;
    json qoi = json::array();
    for (const QoiBlock& b : blocks) qoi.push_back({{"name", b.name}, {"size", b.grid.size()}, {"observed", !b.observed.empty()}});
    pj["qoi"] = qoi;
    pj["labels"] = json::array();
    for (const auto& [label, stack] : stacks) pj["labels"].push_back(label);
    pj["dropped"] = drops;
    write_json(ctx.out / "predict.json", pj);
    timer.done();
}

inline json coverage_json(const CoverageReport& c) {
    return {{"coverage", c.coverage},
            {"mean_pi_width", c.mean_pi_width},
            {"points_inside", c.points_inside},
            {"points_total", c.points_total}};
}

/// Coverage and sharpness of every summary against truth (and against the
/// noisy observations where a QoI has them).
inline json stage_report(const StageContext& ctx) {
    const detail::StageTimer timer(ctx, "report");
    const RunConfig& cfg = ctx.config;
    const std::string hash = cfg.hash();
    const detail::TrainingFile t = detail::read_training(ctx);
    const json training = read_json(ctx.out / "training.json");
    const fs::path ppath = ctx.out / "predict.json";
    const json pj = read_json(ppath);
    detail::require_hash(ppath, pj.value("config_hash", std::string()), hash);

    json rep;
    rep["schema_version"] = kReportSchemaVersion;
    rep["library_version"] = SSPOD_VERSION;
    rep["config_hash"] = hash;
    rep["config"] = cfg.echo();
    rep["status"] = "ok";
    rep["problem"] = cfg.problem.kind;
    rep["k"] = t.k;
    rep["r"] = t.r;
    rep["snapshot_count"] = t.m;
    rep["beta_integer"] = t.beta_integer;
    rep["beta_refined"] = t.beta_refined ? json(*t.beta_refined) : json(nullptr);
    rep["beta_star"] = t.beta_refined ? *t.beta_refined : t.beta_integer;
    rep["training"] = {{"integer", training.at("integer")}, {"refined", training.at("refined")}};
    rep["wall_times"] = "timings.json";

    json ensembles = json::object();
    for (const auto& [label, beta] : detail::ensemble_labels(t)) {
        json e;
        e["beta"] = beta;
        e["dropped"] = pj.at("dropped").value(label, json::array()).size();
        json q = json::object();
        for (const json& block : pj.at("qoi")) {
            const std::string name = block.at("name").get<std::string>();
            const fs::path spath = ctx.out / ("summary_" + label + "_" + name + ".csv");
            const CsvTable s = read_csv(spath);
            detail::require_hash(spath, s.config_hash, hash);
            PredictionSummary sum;
            sum.lower = s.numeric("lower");
            sum.upper = s.numeric("upper");
            sum.mean = s.numeric("mean");
            sum.std = s.numeric("std");
            sum.level = cfg.ensemble.level;
            json qj = coverage_json(coverage(sum, s.numeric("truth")));
            const Vector rom = s.numeric("rom");
            qj["rom_inside_fraction"] = coverage(sum, rom).coverage;
            if (block.at("observed").get<bool>()) {
                const fs::path opath = ctx.out / ("observations_" + name + ".csv");
                const CsvTable o = read_csv(opath);
                detail::require_hash(opath, o.config_hash, hash);
                const Vector idx = o.numeric("grid_index");
                PredictionSummary at;
                at.lower.resize(idx.size());
                at.upper.resize(idx.size());
                at.mean.resize(idx.size());
                at.std.resize(idx.size());
                Vector truth_at(idx.size());
                const Vector truth = s.numeric("truth");
                for (Index i = 0; i < idx.size(); ++i) {
                    const auto g = static_cast<Index>(idx(i));
                    at.lower(i) = sum.lower(g);
                    at.upper(i) = sum.upper(g);
                    at.mean(i) = sum.mean(g);
                    at.std(i) = sum.std(g);
                    truth_at(i) = truth(g);
                }
                qj["observed"] = coverage_json(coverage(at, o.numeric("observation")));
                qj["truth_at_observed"] = coverage_json(coverage(at, truth_at));
            }
            q[name] = qj;
        }
        e["qoi"] = q;
        ensembles[label] = e;
    }
    rep["ensembles"] = ensembles;
    const std::string final_label = t.beta_refined ? "refined" : "integer";
    const std::string primary = pj.at("qoi").at(0).at("name").get<std::string>();
    rep["primary"] = {{"ensemble", final_label}, {"qoi", primary}};
    rep["coverage"] = ensembles[final_label]["qoi"][primary]["coverage"];
    rep["mean_pi_width"] = ensembles[final_label]["qoi"][primary]["mean_pi_width"];
    write_json(ctx.out / "report.json", rep);
    timer.done();
    return rep;
}

/// Failure record in place of a report; partial artifacts stay on disk.
inline void write_error_report(const StageContext& ctx, const std::string& stage, const std::string& what, int exit_code) {
    json rep;
    rep["schema_version"] = kReportSchemaVersion;
    rep["library_version"] = SSPOD_VERSION;
    rep["status"] = "error";
    rep["stage"] = stage;
    rep["error"] = what;
    rep["exit_code"] = exit_code;
    try {
        rep["config_hash"] = ctx.config.hash();
        rep["config"] = ctx.config.echo();
    } catch (...) {
    }
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    write_json(ctx.out / "report.json", rep);
}

inline json cmd_run(const StageContext& ctx) {
    stage_train(ctx);
    stage_sample(ctx);
    stage_predict(ctx);
    return stage_report(ctx);
}

}  // namespace sspod
