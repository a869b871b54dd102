#include <doctest.h>

#include "subsweep/analytic.hpp"
