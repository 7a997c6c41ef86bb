/**
 * Benchmark environments the adapter can serve.
 *
 * Real suites (ALFWorld, ScienceWorld, BabyAI) plug in behind the same
 * interface; installing and wiring them is out of scope here. The two
 * built-in environments are small deterministic stand-ins used by the
 * conformance tests and as reference implementations: `chain` is a short
 * household task list, `loop` is a lighthouse that never lets you win.
 */

export interface StepOutcome {
  observation: string;
  /** Canonical state description; subgoal regexes match against this. */
  stateText: string;
  /** Native per-subgoal annotations, when the suite tracks them. */
  progress?: boolean[];
  success: boolean;
  done: boolean;
  validActions?: string[];
}

export interface Benchmark {
  readonly goal: string;
  reset(): StepOutcome;
  step(action: string): StepOutcome;
}

const NOOP = "Nothing happens.";

function normalize(action: string): string {
  return action.trim().toLowerCase();
}

interface ChainStage {
  action: string;
  observation: string;
  // Appended to the state text once the stage is complete; also the
  // phrase a subgoal pattern would anchor on.
  fact: string;
}

interface ChainTask {
  goal: string;
  start: string;
  // Scene framing for the state text; progress facts are appended to it,
  // so it must stay true for the whole episode.
  baseState: string;
  stages: ChainStage[];
}

const CHAIN_TASKS: ChainTask[] = [
  {
    goal: "heat the croissant in the microwave",
    start:
      "You are in a small kitchen. A croissant sits in the fridge. " +
      "The microwave door hangs open.",
    baseState: "You are in the kitchen.",
    stages: [
      {
        action: "take the croissant",
        observation: "You take the croissant from the fridge. It is cold to the touch.",
        fact: "You are carrying the croissant.",
      },
      {
        action: "heat the croissant",
        observation: "The microwave hums for ten seconds. The croissant steams gently.",
        fact: "The croissant is hot.",
      },
    ],
  },
  {
    goal: "lock the toolshed for the night",
    start:
      "Dusk settles over the yard. The toolshed door stands open, " +
      "and the key hangs on a nail beside it.",
    baseState: "You are in the yard by the toolshed.",
    stages: [
      {
        action: "take the key",
        observation: "You lift the key off its nail.",
        fact: "You are holding the key.",
      },
      {
        action: "close the shed door",
        observation: "The door swings shut with a creak.",
        fact: "The shed door is closed.",
      },
      {
        action: "lock the door",
        observation: "The lock clicks. The shed is secure for the night.",
        fact: "The shed is locked.",
      },
    ],
  },
  {
    goal: "water the tomato plant on the balcony",
    start:
      "The watering can sits empty by the kitchen sink. Through the glass " +
      "of the balcony door you can see the tomato plant drooping.",
    baseState: "You are in the flat, near the balcony.",
    stages: [
      {
        action: "take the watering can",
        observation: "You pick up the watering can. It is light and empty.",
        fact: "You are carrying the watering can.",
      },
      {
        action: "fill the can at the sink",
        observation: "Water drums into the can until it is heavy.",
        fact: "The watering can is full.",
      },
      {
        action: "open the balcony door",
        observation: "The balcony door slides open. Warm air drifts in.",
        fact: "The balcony door is open.",
      },
      {
        action: "water the tomato plant",
        observation: "You soak the soil. The tomato plant seems to straighten a little.",
        fact: "The tomato plant is watered.",
      },
    ],
  },
];

class ChainBenchmark implements Benchmark {
  readonly goal: string;
  private task: ChainTask;
  private stage = 0;

  constructor(taskIndex: number) {
    const task = CHAIN_TASKS[taskIndex];
    if (!task) {
      throw new Error(`chain has tasks 0..${CHAIN_TASKS.length - 1}, got ${taskIndex}`);
    }
    this.task = task;
    this.goal = task.goal;
  }

  private stateText(): string {
    const facts = this.task.stages.slice(0, this.stage).map((s) => s.fact);
    return [this.task.baseState, ...facts].join(" ");
  }

  private outcome(observation: string): StepOutcome {
    const total = this.task.stages.length;
    const next = this.task.stages[this.stage];
    return {
      observation,
      stateText: this.stateText(),
      progress: this.task.stages.map((_, i) => i < this.stage),
      success: this.stage >= total,
      done: this.stage >= total,
      validActions: next ? [next.action, "look"] : undefined,
    };
  }

  reset(): StepOutcome {
    this.stage = 0;
    return this.outcome(this.task.start);
  }

  step(action: string): StepOutcome {
    const next = this.task.stages[this.stage];
    if (next && normalize(action) === next.action) {
      this.stage += 1;
      return this.outcome(next.observation);
    }
    if (normalize(action) === "look") {
      return this.outcome(this.stateText());
    }
    return this.outcome(NOOP);
  }
}

interface LoopTask {
  goal: string;
  start: string;
  // Flags beyond the first are never satisfied; the episode never ends.
  subgoalCount: number;
}

const LOOP_TASKS: LoopTask[] = [
  {
    goal: "signal the rescue boat from the lighthouse",
    start:
      "You stand in the lantern room of the lighthouse. The beacon is dark. " +
      "Somewhere out in the fog, a boat is searching.",
    subgoalCount: 2,
  },
  {
    goal: "signal the rescue boat and be taken aboard",
    start:
      "You stand in the lantern room of the lighthouse. The beacon is dark. " +
      "The sea below is empty in every direction.",
    subgoalCount: 3,
  },
];

const DRIFT = [
  "Waves crash against the rocks below.",
  "The fog thickens. Nothing answers.",
  "Wind rattles the lantern-room glass.",
];

class LoopBenchmark implements Benchmark {
  readonly goal: string;
  private task: LoopTask;
  private lit = false;
  private drift = 0;

  constructor(taskIndex: number) {
    const task = LOOP_TASKS[taskIndex];
    if (!task) {
      throw new Error(`loop has tasks 0..${LOOP_TASKS.length - 1}, got ${taskIndex}`);
    }
    this.task = task;
    this.goal = task.goal;
  }

  private stateText(): string {
    return this.lit
      ? "The beacon is lit. No answer has come from the water."
      : "The beacon is dark. No answer has come from the water.";
  }

  private outcome(observation: string): StepOutcome {
    const flags = Array.from(
      { length: this.task.subgoalCount },
      (_, i) => i === 0 && this.lit,
    );
    return {
      observation,
      stateText: this.stateText(),
      progress: flags,
      success: false,
      done: false,
    };
  }

  reset(): StepOutcome {
    this.lit = false;
    this.drift = 0;
    return this.outcome(this.task.start);
  }

  step(action: string): StepOutcome {
    if (normalize(action) === "light the beacon" && !this.lit) {
      this.lit = true;
      return this.outcome("The beacon flares to life above you.");
    }
    if (normalize(action) === "look") {
      return this.outcome(this.stateText());
    }
    const line = DRIFT[this.drift % DRIFT.length]!;
    this.drift += 1;
    return this.outcome(line);
  }
}

const SUITES: Record<string, (taskIndex: number) => Benchmark> = {
  chain: (i) => new ChainBenchmark(i),
  loop: (i) => new LoopBenchmark(i),
};

export function suiteNames(): string[] {
  return Object.keys(SUITES).sort();
}

export function loadBenchmark(name: string, taskIndex: number): Benchmark {
  const factory = SUITES[name];
  if (!factory) {
    throw new Error(`unknown env ${JSON.stringify(name)}; available: ${suiteNames().join(", ")}`);
  }
  return factory(taskIndex);
}
