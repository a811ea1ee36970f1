export {
  advantagesFor,
  scoreComponents,
  scoreRollouts,
  type AdvantageOptions,
  type AdvantageResult,
  type ScoredRollout,
} from "./bridge.js";
export {
  closeSession,
  createSession,
  EngineError,
  runEngine,
  type BridgeSession,
  type SessionOptions,
} from "./session.js";
export {
  advantageRecordSchema,
  rewardBreakdownSchema,
  versionInfoSchema,
  SUPPORTED_ADVANTAGE_SCHEMA,
  SUPPORTED_DUMP_SCHEMA,
  type AdvantageRecord,
  type RewardBreakdown,
  type RewardComponents,
  type VersionInfo,
} from "./schemas.js";
