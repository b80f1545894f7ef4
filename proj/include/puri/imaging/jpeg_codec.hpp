#pragma once

#include "puri/imaging/image.hpp"

namespace puri::imaging {

// Baseline JPEG encode at the given quality followed by decode, entirely in
// memory. The lossy round trip is the point: it is the JPEG purifier.
ImageTensor jpeg_roundtrip(const ImageTensor& img, int quality);

}  // namespace puri::imaging
