"""
Reputation ledger for YDR tokens.

Balances are integers and every change is an appended ReputationEvent, so an
account's balance is always the fold of its history. There is no
transfer: reputation is only earned, spent, lost or liquidated.
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import pandas as pd

from config import config
from errors import (
    FrozenAccount,
    InsufficientReputation,
    LiquidatedAccount,
    NonPositiveAmount,
    UnknownAccount,
)
from logger import logger

log = logger.child("ledger")

VALIDATOR_THRESHOLD = int(config.get('ledger.validator_threshold', 1_000_000))


class EventKind(str, Enum):
    EARN = "Earn"
    SPEND = "Spend"
    SLASH = "Slash"
    LIQUIDATE = "Liquidate"


@dataclass(frozen=True)
class ReputationEvent:
    kind: EventKind
    amount: int
    reason: str
    tick: int

    def delta(self) -> int:
        """Signed balance change this event records"""
        return self.amount if self.kind is EventKind.EARN else -self.amount


@dataclass
class ReputationAccount:
    owner_address: str
    balance: int = 0
    frozen: bool = False
    liquidated: bool = False
    history: List[ReputationEvent] = field(default_factory=list)


def replay_balance(history: Iterable[ReputationEvent]) -> int:
    """Fold a history from the zero balance"""
    balance = 0
    for event in history:
        balance += event.delta()
    return balance


class ReputationLedger:
    """All YDR accounts of one simulation"""

    def __init__(self, validator_threshold: int = VALIDATOR_THRESHOLD):
        self.validator_threshold = validator_threshold
        self.accounts: Dict[str, ReputationAccount] = {}
        self._totals = {kind: 0 for kind in EventKind}

    # accounts

    def open_account(self, owner_address: str) -> ReputationAccount:
        if owner_address in self.accounts:
            return self.accounts[owner_address]
        account = ReputationAccount(owner_address)
        self.accounts[owner_address] = account
        return account

    def account(self, owner_address: str) -> ReputationAccount:
        try:
            return self.accounts[owner_address]
        except KeyError:
            raise UnknownAccount(f"no account for {owner_address}") from None

    def balance(self, owner_address: str) -> int:
        return self.account(owner_address).balance

    def _append(self, account: ReputationAccount, kind: EventKind, amount: int, reason: str, tick: int):
        event = ReputationEvent(kind, amount, reason, tick)
        account.history.append(event)
        account.balance += event.delta()
        self._totals[kind] += amount
        return event

    @staticmethod
    def _check_amount(amount) -> int:
        if int(amount) != amount or amount <= 0:
            raise NonPositiveAmount(f"amount must be a positive integer, got {amount}")
        return int(amount)

    # operations

    def earn(self, owner_address: str, amount: int, reason: str, tick: int) -> int:
        account = self.account(owner_address)
        if account.liquidated:
            raise LiquidatedAccount(f"{owner_address} has been liquidated", tick=tick)
        if account.frozen:
            raise FrozenAccount(f"{owner_address} is frozen", tick=tick)
        amount = self._check_amount(amount)
        self._append(account, EventKind.EARN, amount, reason, tick)
        return account.balance

    def spend(self, owner_address: str, amount: int, purpose: str, tick: int) -> int:
        account = self.account(owner_address)
        if account.liquidated:
            raise LiquidatedAccount(f"{owner_address} has been liquidated", tick=tick)
        if account.frozen:
            raise FrozenAccount(f"{owner_address} is frozen", tick=tick)
        amount = self._check_amount(amount)
        if amount > account.balance:
            raise InsufficientReputation(
                f"{owner_address} holds {account.balance} YDR, cannot spend {amount}", tick=tick
            )
        self._append(account, EventKind.SPEND, amount, purpose, tick)
        return account.balance

    def slash(self, owner_address: str, amount: int, reason: str, tick: int) -> int:
        """Deduct up to `amount`; the balance floors at zero.

        The Slash event records the amount actually deducted, which may be 0.
        """
        account = self.account(owner_address)
        if account.liquidated:
            raise LiquidatedAccount(f"{owner_address} has been liquidated", tick=tick)
        amount = self._check_amount(amount)
        deducted = min(amount, account.balance)
        self._append(account, EventKind.SLASH, deducted, reason, tick)
        if deducted:
            log.warning(f"slashed {owner_address} by {deducted} YDR ({reason}) at tick {tick}")
        return account.balance

    def liquidate(self, owner_address: str, tick: int) -> int:
        account = self.account(owner_address)
        if account.liquidated:
            raise LiquidatedAccount(f"{owner_address} has already been liquidated", tick=tick)
        payout = account.balance
        if payout:
            self._append(account, EventKind.LIQUIDATE, payout, "liquidation", tick)
        account.frozen = True
        account.liquidated = True
        log.info(f"liquidated {owner_address}: payout {payout} YDR at tick {tick}")
        return payout

    def freeze(self, owner_address: str) -> None:
        self.account(owner_address).frozen = True

    def forfeit(self, owner_address: str, tick: int) -> int:
        """Destroy the whole balance of an account and freeze it (identity burn)"""
        account = self.account(owner_address)
        forfeited = account.balance
        if forfeited and not account.liquidated:
            self._append(account, EventKind.SLASH, forfeited, "burn-forfeit", tick)
        account.frozen = True
        return forfeited

    def is_validator_eligible(self, owner_address: str) -> bool:
        account = self.accounts.get(owner_address)
        if account is None or account.frozen:
            return False
        return account.balance > self.validator_threshold

    def eligible_addresses(self, candidates: Optional[Iterable[str]] = None) -> List[str]:
        pool = self.accounts if candidates is None else candidates
        return sorted(a for a in pool if self.is_validator_eligible(a))

    # accounting

    def total_supply(self) -> int:
        return sum(account.balance for account in self.accounts.values())

    def totals(self) -> Dict[str, int]:
        """Cumulative amounts per event kind across all accounts"""
        return {kind.value: amount for kind, amount in self._totals.items()}

    def check_conservation(self) -> bool:
        expected = (
            self._totals[EventKind.EARN]
            - self._totals[EventKind.SPEND]
            - self._totals[EventKind.SLASH]
            - self._totals[EventKind.LIQUIDATE]
        )
        if expected != self.total_supply():
            return False
        return all(
            replay_balance(a.history) == a.balance and a.balance >= 0
            for a in self.accounts.values()
        )

    # export

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "address": address,
                "kind": event.kind.value,
                "amount": event.amount,
                "reason": event.reason,
                "tick": event.tick,
            }
            for address, account in self.accounts.items()
            for event in account.history
        ]
        return pd.DataFrame(rows, columns=["address", "kind", "amount", "reason", "tick"])

    def export_csv(self, path) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False)
        return path
