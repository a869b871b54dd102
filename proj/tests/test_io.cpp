#include <doctest.h>

#include "subsweep/io.hpp"
