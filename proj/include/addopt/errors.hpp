#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace addopt {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Two sites share exact coordinates, so an inverse-distance weight is undefined.
class DuplicateCoordinatesError : public Error {
public:
    DuplicateCoordinatesError(const std::string& id_a, const std::string& id_b)
        : Error("duplicate coordinates for sites '" + id_a + "' and '" + id_b + "'"),
          first(id_a), second(id_b) {}
    std::string first, second;
};

class MissingSalesError : public Error {
public:
    explicit MissingSalesError(const std::string& site_id)
        : Error("site '" + site_id + "' has no base sales"), site(site_id) {}
    std::string site;
};

class MissingFieldError : public Error {
public:
    MissingFieldError(const std::string& site_id, const std::string& field_name)
        : Error("site '" + site_id + "' is missing field '" + field_name + "'"),
          site(site_id), field(field_name) {}
    std::string site, field;
};

class ConstantVectorError : public Error {
public:
    ConstantVectorError() : Error("vector is constant; Moran's I is undefined") {}
};

class EmptyWeightsError : public Error {
public:
    EmptyWeightsError() : Error("weight matrix sums to zero") {}
};

class SingularDesignError : public Error {
public:
    SingularDesignError() : Error("design matrix is rank deficient (X'X singular)") {}
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error(what) {}
};

// Raised when a radial-kernel or lag-bearing model is routed to the
// linear-coefficient extraction.
class SpatialModelNotLinearizableError : public Error {
public:
    explicit SpatialModelNotLinearizableError(const std::string& what) : Error(what) {}
};

// Raised when a model that is not affine in its features is routed to the
// quadratic-coefficient extraction.
class NotAffineInFeaturesError : public Error {
public:
    explicit NotAffineInFeaturesError(const std::string& what) : Error(what) {}
};

class ZeroActualError : public Error {
public:
    explicit ZeroActualError(std::size_t idx)
        : Error("actual value at index " + std::to_string(idx) + " is zero; MAPE undefined"),
          index(idx) {}
    std::size_t index;
};

class NoActiveSitesError : public Error {
public:
    NoActiveSitesError() : Error("network has no active sites") {}
};

class EmptyNetworkError : public Error {
public:
    EmptyNetworkError() : Error("network is empty") {}
};

struct RowIssue {
    std::size_t line = 0;     // 1-based line number in the source file
    std::string field;
    std::string reason;
};

// Carries every row-level problem found while loading a site file.
class CsvError : public Error {
public:
    CsvError(const std::string& context, std::vector<RowIssue> found)
        : Error(format(context, found)), issues(std::move(found)) {}
    std::vector<RowIssue> issues;

private:
    static std::string format(const std::string& context, const std::vector<RowIssue>& issues) {
        std::string msg = context;
        for (const auto& i : issues) {
            msg += "\n  line " + std::to_string(i.line);
            if (!i.field.empty()) msg += ", field '" + i.field + "'";
            msg += ": " + i.reason;
        }
        return msg;
    }
};

}  // namespace addopt
