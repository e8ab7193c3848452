#pragma once

#include <string>

#include "sgcp/common.hpp"
#include "sgcp/domain.hpp"

namespace sgcp {

struct EventSet {
    enum class Label { observed, thinned, simulated };

    Mat points;  // N x D
    BoxDomain domain;
    Label label = Label::observed;

    EventSet(Mat pts, BoxDomain dom, Label lab) : points(std::move(pts)), domain(std::move(dom)), label(lab) {
        if (points.rows() > 0 && points.cols() != domain.dim())
            throw data_error("event dimension does not match domain dimension");
        for (Eigen::Index i = 0; i < points.rows(); ++i)
            if (!domain.contains(points.row(i).transpose()))
                throw data_error("event " + std::to_string(i) + " lies outside the domain");
    }

    Eigen::Index count() const { return points.rows(); }
};

}  // namespace sgcp
