#pragma once

// Error taxonomy shared by all modules.  Everything derives from KhError so
// callers can catch broadly; the concrete type says which contract failed.
// Messages carry the offending crossing, edge, move index, or bidegree.

#include <stdexcept>
#include <string>

namespace kh {

struct KhError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input text that does not scan at all.
struct MalformedInput : KhError { using KhError::KhError; };

// Crossing tuple with arity other than 4, or a non-numeric entry.
struct MalformedCrossing : KhError { using KhError::KhError; };

// An edge identifier whose total occurrence count is not exactly 2.
struct DanglingEdge : KhError { using KhError::KhError; };

// Under-strand directions cannot be oriented consistently, or an
// orientation override contradicts a constrained component.
struct OrientationConflict : KhError { using KhError::KhError; };

// Tangle boundary violations: missing ends, an end used twice, or a
// closed component inside a tangle.
struct InvalidTangle : KhError { using KhError::KhError; };

// Reduced-complex request on a diagram without a basepoint.
struct MissingBasepoint : KhError { using KhError::KhError; };

// Dimension lists or matrix shapes that disagree.
struct LengthMismatch : KhError { using KhError::KhError; };

// A movie move whose site does not exist in the current frame or does not
// have the shape the move requires.
struct InvalidSite : KhError { using KhError::KhError; };

// A move whose site includes the basepoint edge; concordance maps must
// keep the basepoint away from all surgery.
struct BasepointTouched : KhError { using KhError::KhError; };

// Composition of maps whose complexes do not line up.
struct ComplexMismatch : KhError { using KhError::KhError; };

// A square d∘f = f∘d failed numerically while assembling a movie map.
struct NotAChainMap : KhError { using KhError::KhError; };

// Integral lift of an F2 cycle has a boundary that is not divisible by 2;
// indicates a sign-convention bug upstream.
struct LiftInconsistency : KhError { using KhError::KhError; };

// A verification suite found a failing identity; message names the
// offending bidegree or move.
struct CheckFailed : KhError { using KhError::KhError; };

// Companion construction called with no tangles.
struct EmptyList : KhError { using KhError::KhError; };

}  // namespace kh
