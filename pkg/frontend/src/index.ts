export type { BoundBuffer } from './sft.js';
export { FormatError, ValidationError, readTensor, validateBuffer, writeTensor } from './sft.js';
export type { EngineOptions, PenaltyResult } from './engine.js';
export { EngineError, penaltyForwardBackward, versionInfo } from './engine.js';
