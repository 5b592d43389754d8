#pragma once

#include <stdexcept>
#include <string>

namespace mpnn {

/// Bad arguments: dimension mismatch, degenerate bounds, invalid config values.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Coordinate too close to the Coulomb singularity at the origin.
class SingularityError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// |Psi| fell below the node floor, so the local kinetic term is undefined.
class NodeProximityError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Non-finite intermediate value in a numerical routine.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training could not proceed (empty batch, too many exclusions, divergence).
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, long step = -1)
        : std::runtime_error(what), step_(step) {}

    long step() const noexcept { return step_; }

private:
    long step_;
};

} // namespace mpnn
