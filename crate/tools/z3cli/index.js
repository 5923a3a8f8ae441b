#!/usr/bin/env node
// SPDX-License-Identifier: Apache-2.0
//
// Runs a single SMT-LIB 2 script through the z3 WASM build and prints the
// solver output (check-sat status and, if requested, the model) to stdout.
//
// Usage: z3cli <script.smt2>
//
// A fresh context is created per invocation: reusing a context across
// eval_smtlib2_string calls would leak assertions between scripts.

'use strict';

const fs = require('fs');

async function main() {
  const path = process.argv[2];
  if (!path) {
    console.error('usage: z3cli <script.smt2>');
    process.exit(2);
  }
  const script = fs.readFileSync(path, 'utf8');
  const { init } = require('z3-solver');
  const { Z3 } = await init();
  const cfg = Z3.mk_config();
  const ctx = Z3.mk_context(cfg);
  try {
    const out = await Z3.eval_smtlib2_string(ctx, script);
    process.stdout.write(out);
    process.exit(0);
  } catch (err) {
    console.error(String(err));
    process.exit(1);
  }
}

main();
