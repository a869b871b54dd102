#include <doctest.h>

#include "subsweep/rational.hpp"
