#pragma once

#include <stdexcept>
#include <string>

namespace qch {

// Error taxonomy shared by the library and the CLI. The category maps to the
// process exit code: schema errors 2, numerical-invariant failures 3, model
// errors (bad causal structure, shape mismatches, ...) 4.
enum class ErrorCategory { schema = 2, numeric = 3, model = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory cat, const std::string& what)
        : std::runtime_error(what), category_(cat) {}
    ErrorCategory category() const { return category_; }
    int exit_code() const { return static_cast<int>(category_); }

private:
    ErrorCategory category_;
};

#define QCH_DEFINE_ERROR(NAME, CATEGORY)                              \
    class NAME : public Error {                                       \
    public:                                                           \
        explicit NAME(const std::string& what)                        \
            : Error(ErrorCategory::CATEGORY, std::string(#NAME ": ") + what) {} \
    }

// causet
QCH_DEFINE_ERROR(CycleError, model);
QCH_DEFINE_ERROR(UnknownEventError, model);
QCH_DEFINE_ERROR(AcausalityViolation, model);
QCH_DEFINE_ERROR(ChainLimitError, model);

// channels
QCH_DEFINE_ERROR(DimensionMismatch, model);
QCH_DEFINE_ERROR(NotCompletelyPositive, numeric);

// history networks
QCH_DEFINE_ERROR(ShapeMismatch, model);
QCH_DEFINE_ERROR(SizeCapError, model);
QCH_DEFINE_ERROR(RungSiteError, model);
QCH_DEFINE_ERROR(BranchCountError, model);
QCH_DEFINE_ERROR(NegativeWeightError, numeric);

// discretization
QCH_DEFINE_ERROR(NonHermitianError, model);
QCH_DEFINE_ERROR(InconsistentEmbedding, model);
QCH_DEFINE_ERROR(NullStateError, numeric);
QCH_DEFINE_ERROR(UnknownNodeError, model);

// superstate
QCH_DEFINE_ERROR(NonOrthonormalBasis, model);
QCH_DEFINE_ERROR(ZeroNormError, numeric);

#undef QCH_DEFINE_ERROR

// Schema errors carry a JSON-pointer-style location.
class SchemaError : public Error {
public:
    SchemaError(const std::string& pointer, const std::string& what)
        : Error(ErrorCategory::schema,
                "SchemaError at '" + pointer + "': " + what),
          pointer_(pointer) {}
    const std::string& pointer() const { return pointer_; }

private:
    std::string pointer_;
};

}  // namespace qch
