#include <doctest.h>

#include "subsweep/dsp.hpp"
