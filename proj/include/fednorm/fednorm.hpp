/*
 * Copyright 2026 The fednorm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "fednorm/bench/cost_report.hpp"
#include "fednorm/bench/precision_report.hpp"
#include "fednorm/core/csv.hpp"
#include "fednorm/core/feature_table.hpp"
#include "fednorm/core/normalize.hpp"
#include "fednorm/core/stats.hpp"
#include "fednorm/error.hpp"
#include "fednorm/he/approx.hpp"
#include "fednorm/he/backend.hpp"
#include "fednorm/he/ciphertext.hpp"
#include "fednorm/he/ledger.hpp"
#include "fednorm/he/params.hpp"
#include "fednorm/partition/partitioner.hpp"
#include "fednorm/protocols/aggregator.hpp"
#include "fednorm/protocols/party.hpp"
#include "fednorm/protocols/session.hpp"
#include "fednorm/transport/channel.hpp"
#include "fednorm/transport/inbox.hpp"
#include "fednorm/transport/message.hpp"
#include "fednorm/transport/tcp.hpp"
