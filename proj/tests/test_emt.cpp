#include <doctest.h>

#include "subsweep/emt.hpp"
