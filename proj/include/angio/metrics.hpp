#pragma once

#include "angio/image.hpp"

namespace angio {

struct MetricReport {
    double dsc = 0.0;
    double cldice = 0.0;
    double tprec = 0.0;
    double tsens = 0.0;
};

// Dice similarity 2|P∩G| / (|P|+|G|); two empty masks compare as 1.
double dsc(const BinaryMask& pred, const BinaryMask& gt);

// Zhang-Suen two-subiteration thinning to a fixpoint. Output is a subset of
// the input and ~1 pixel wide. Tiny 2x2 blobs erode away entirely (classic
// Zhang-Suen artifact); larger components keep their 8-connectivity.
BinaryMask skeletonize(const BinaryMask& mask);

// Centerline Dice: tprec = |skel(pred) ∩ gt| / |skel(pred)|,
// tsens = |skel(gt) ∩ pred| / |skel(gt)|, cldice = harmonic mean.
// Conventions: both masks empty -> 1; otherwise an empty skeleton -> 0.
// The report's dsc field carries the plain Dice of the same pair.
MetricReport cldice(const BinaryMask& pred, const BinaryMask& gt);

}  // namespace angio
