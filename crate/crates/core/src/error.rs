use thiserror::Error;

use crate::types::{ActorId, Amount, ModuleId, ProposalId, ResolutionId};

/// Why an event was rejected. A rejected event leaves state untouched and
/// nothing is appended to the log by the engine itself.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("validation failed: {0}")]
    ValidationFailed(String),

    // registry
    #[error("actor {0} is already an active member")]
    DuplicateMember(ActorId),
    #[error("onboarding of {0} is not authorized")]
    UnauthorizedOnboarding(ActorId),
    #[error("actor {0} is not an active member")]
    NotAMember(ActorId),
    #[error("unknown role {0}")]
    UnknownRole(String),

    // governance
    #[error("proposal kind does not match action: {0}")]
    KindMismatch(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("unknown proposal {0}")]
    UnknownProposal(ProposalId),
    #[error("proposal {0} is not open for voting")]
    NotOpen(ProposalId),
    #[error("{0} already voted on proposal {1}")]
    AlreadyVoted(ActorId, ProposalId),
    #[error("{0} delegated voting power for this proposal kind")]
    DelegatedAway(ActorId),
    #[error("{0} was not a member when proposal {1} opened")]
    NotEligible(ActorId, ProposalId),
    #[error("actor {0} cannot delegate to itself")]
    SelfDelegation(ActorId),
    #[error("delegation would chain through {0}")]
    ChainedDelegation(ActorId),
    #[error("{0} already voted on open proposal {1} in this scope")]
    ConflictingVote(ActorId, ProposalId),
    #[error("voting window of proposal {0} has not elapsed")]
    WindowNotElapsed(ProposalId),
    #[error("proposal {0} is not challengeable")]
    NotChallengeable(ProposalId),
    #[error("challenges are disabled")]
    ChallengesDisabled,
    #[error("action is outside the committee mandate: {0}")]
    OutsideMandate(String),
    #[error("committee approval {got} of {members} is not a majority")]
    InsufficientCommitteeApproval { got: usize, members: usize },
    #[error("unknown committee {0}")]
    UnknownCommittee(String),

    // token policy
    #[error("clawback of {requested} exceeds unvested balance {unvested}")]
    ExceedsUnvested { requested: Amount, unvested: Amount },
    #[error("treasury balance {balance} is below {requested}")]
    InsufficientTreasury { requested: Amount, balance: Amount },
    #[error("vested balance {vested} is below {requested}")]
    InsufficientVested { requested: Amount, vested: Amount },
    #[error("locked balance {locked} is below {requested}")]
    InsufficientLocked { requested: Amount, locked: Amount },
    #[error("lockup active until tick {0}")]
    LockupActive(u64),
    #[error("unauthorized: {0}")]
    Unauthorized(String),

    // oracle
    #[error("provider {0} is not in the active set")]
    InactiveProvider(String),
    #[error("provider {0} already attested this round")]
    DuplicateAttestation(String),
    #[error("attestation round is closed")]
    RoundClosed,

    // foundation
    #[error("proposal {0} is not executable")]
    NotExecutable(ProposalId),
    #[error("proposal {0} is not foundation-bound")]
    NotFoundationBound(ProposalId),
    #[error("{0} is not a serving director")]
    NotADirector(ActorId),
    #[error("resolution {0} is not at the queue head")]
    NotQueueHead(ResolutionId),
    #[error("no legal foundation is configured")]
    NoFoundation,

    // jurisdiction
    #[error("module {0} is already admitted")]
    DuplicateModule(ModuleId),
    #[error("unknown module {0}")]
    UnknownModule(ModuleId),

    // workstreams
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("assignee {0} lacks required role {1}")]
    MissingRole(ActorId, String),
    #[error("task {0} is not open for assignment")]
    TaskNotOpen(String),
    #[error("task {0} is at maximum escalation")]
    MaxEscalation(String),
    #[error("task {0} verification is missing")]
    VerificationMissing(String),
}

impl EngineError {
    pub fn invalid(reason: impl Into<String>) -> Self {
        EngineError::ValidationFailed(reason.into())
    }
}

pub type EngineResult<T> = Result<T, EngineError>;
