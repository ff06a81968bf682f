#include "halox/simtime.hpp"

#include <Eigen/Core>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <cmath>
#include <stdexcept>

namespace halox::sim {

std::string_view to_string(Metric m)
{
    switch (m) {
    case Metric::LocalWork: return "local_work";
    case Metric::NonLocalWork: return "nonlocal_work";
    case Metric::NonOverlap: return "non_overlap";
    case Metric::TimePerStep: return "time_per_step";
    }
    return "unknown";
}

std::vector<CalibrationTarget> default_targets()
{
    const AnalyticSystem small{11250.0, 4, 1};
    const AnalyticSystem large{90000.0, 4, 1};
    return {
        {small, Schedule::Serialized, Metric::NonLocalWork, 116.0},
        {small, Schedule::Fused, Metric::NonLocalWork, 64.0},
        {large, Schedule::Serialized, Metric::LocalWork, 152.0},
        {large, Schedule::Fused, Metric::NonLocalWork, 152.0},
    };
}

double evaluate(const CalibrationTarget& t, const MachineModel& m)
{
    const auto sm = metrics(simulate_step(analytic_shape(t.system), t.schedule, m));
    switch (t.metric) {
    case Metric::LocalWork: return sm.localWork;
    case Metric::NonLocalWork: return sm.nonLocalWork;
    case Metric::NonOverlap: return sm.nonOverlap;
    case Metric::TimePerStep: return sm.timePerStep;
    }
    return 0.0;
}

namespace {

constexpr int kParams = 4;

// Parameters are fitted in log space so they stay positive.
MachineModel with_params(MachineModel m, const Eigen::VectorXd& x)
{
    m.computeRate = std::exp(x[0]);
    m.nonLocalIntensity = std::exp(x[1]);
    m.directLinkLatency = std::exp(x[2]);
    m.mpiOverhead = std::exp(x[3]);
    return m;
}

struct Residuals {
    using Scalar = double;
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

    const std::vector<CalibrationTarget>* targets;
    MachineModel base;

    int inputs() const { return kParams; }
    int values() const { return static_cast<int>(targets->size()); }

    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const
    {
        const MachineModel m = with_params(base, x);
        for (std::size_t i = 0; i < targets->size(); ++i)
            f[static_cast<Eigen::Index>(i)] = evaluate((*targets)[i], m) - (*targets)[i].value;
        return 0;
    }
};

} // namespace

CalibrationResult calibrate(const std::vector<CalibrationTarget>& targets, const MachineModel& start)
{
    if (targets.size() < static_cast<std::size_t>(kParams))
        throw std::invalid_argument("calibration needs at least four targets");
    start.validate();
    Eigen::VectorXd x(kParams);
    x << std::log(std::max(start.computeRate, 1e-6)), std::log(std::max(start.nonLocalIntensity, 1e-6)),
        std::log(std::max(start.directLinkLatency, 1e-6)), std::log(std::max(start.mpiOverhead, 1e-6));

    Residuals fn{&targets, start};
    Eigen::NumericalDiff<Residuals> numeric(fn);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<Residuals>> lm(numeric);
    lm.parameters.maxfev = 2000;
    lm.parameters.xtol = 1e-12;
    lm.parameters.ftol = 1e-12;
    const auto status = lm.minimize(x);

    CalibrationResult r;
    r.model = with_params(start, x);
    r.iterations = static_cast<int>(lm.iter);
    r.converged = status == Eigen::LevenbergMarquardtSpace::RelativeReductionTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::RelativeErrorTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::RelativeErrorAndReductionTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::CosinusTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::XtolTooSmall;
    for (const auto& t : targets) {
        const double v = evaluate(t, r.model);
        r.predicted.push_back(v);
        r.residuals.push_back(v - t.value);
    }
    return r;
}

} // namespace halox::sim
