// Wire-format validation for the engine's published JSON contracts.
// The bridge checks shapes and schema versions; it never recomputes values.

import { z } from "zod";

export const SUPPORTED_DUMP_SCHEMA = "trajectory_group.v1";
export const SUPPORTED_ADVANTAGE_SCHEMA = "advantage_set.v1";

const grade = z.union([z.number().int().min(1).max(10), z.literal("unknown")]);

export const physicsReportSchema = z.object({
  collision_ratio: z.number().min(0).max(1),
  constraint_ratio: z.number().min(0).max(1),
  physics_reward: z.number(),
  per_object_penalty: z.record(z.number().min(0).max(1)),
});

export const renderRewardSchema = z.object({
  value: z.number().min(0).max(1),
  grades: z
    .object({
      realism: grade,
      functionality: grade,
      layout: grade,
      color_scheme: grade,
      aesthetic: grade,
    })
    .nullable(),
  source: z.enum(["stub", "remote_judge", "external"]),
});

export const rewardBreakdownSchema = z.object({
  format: z.number(),
  physics: physicsReportSchema,
  render: renderRewardSchema,
  total: z.number(),
});

export type RewardBreakdown = z.infer<typeof rewardBreakdownSchema>;

export const coordLabelSchema = z
  .object({ object_id: z.string(), axis: z.enum(["x", "y", "z"]) })
  .nullable();

export const advantageEntrySchema = z.object({
  token_index: z.number().int().min(0),
  label: coordLabelSchema,
  advantage: z.number(),
  policy_term: z.number(),
  kl_term: z.number().min(0),
});

export const advantageRecordSchema = z.object({
  schema: z.literal(SUPPORTED_ADVANTAGE_SCHEMA),
  group_id: z.string(),
  mu: z.number(),
  sigma: z.number().min(0),
  w_phys: z.number().min(0),
  epsilon: z.number(),
  kl_beta: z.number().min(0),
  objective: z.number(),
  trajectories: z.array(z.array(advantageEntrySchema)),
});

export type AdvantageRecord = z.infer<typeof advantageRecordSchema>;

// Dump lines pass through the bridge unmodified; only the envelope fields
// the bridge relies on are validated here.
export const dumpLineEnvelopeSchema = z.object({
  schema: z.string(),
  task_id: z.string(),
  trajectories: z.array(z.unknown()).min(2),
});

export const versionInfoSchema = z.object({
  version: z.string(),
  schemas: z.object({
    trajectory_dump: z.string(),
    advantages: z.string(),
    config: z.string(),
    checkpoint: z.string(),
  }),
});

export type VersionInfo = z.infer<typeof versionInfoSchema>;

export interface RewardComponents {
  render: number;
  format: number;
  collision_ratio: number;
  constraint_ratio: number;
}
