#ifndef RVM_RVM_HPP
#define RVM_RVM_HPP

// Umbrella header for the numerical library (the CLI lives in rvm/cli.hpp).

#include "rvm/config.hpp"
#include "rvm/csv.hpp"
#include "rvm/kernels.hpp"
#include "rvm/model.hpp"
#include "rvm/riccati.hpp"
#include "rvm/simulate.hpp"
#include "rvm/special.hpp"
#include "rvm/stabilizer.hpp"
#include "rvm/strategy.hpp"
#include "rvm/verify.hpp"

#endif
