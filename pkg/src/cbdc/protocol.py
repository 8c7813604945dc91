"""Messages exchanged between wallets and MSBs.

Everything a wallet sends is a per-transaction-fresh value: blinded
messages, token ids, verification keys, certificates, authorizations, and
echoes of the MSB-issued invoice. A wallet never sends an account
reference or any identifier of its own; withdrawals are requested on the
customer's authenticated account session, which carries the account, while
the wallet contributes only the blinded messages.
"""
from dataclasses import dataclass

from cbdc.blindsig import BlindedMessage
from cbdc.encoding import decode, encode
from cbdc.errors import DecodeError
from cbdc.token import SpendContext, SpentInput


@dataclass(frozen=True)
class Invoice:
    """Issued by the receiving MSB; fixes where and when tokens may be spent."""

    dest_msb_id: str
    nonce: int
    amount: int
    logical_time: int

    def context(self, input_value):
        return SpendContext(self.dest_msb_id, self.nonce, input_value, self.logical_time)

    def to_wire(self):
        return ("invoice", self.dest_msb_id, self.nonce, self.amount, self.logical_time)

    @classmethod
    def from_wire(cls, wire):
        tag, dest, nonce, amount, logical_time = wire
        if tag != "invoice":
            raise DecodeError("not an invoice")
        return cls(dest, nonce, amount, logical_time)


@dataclass(frozen=True)
class WithdrawalRequest:
    blinded: tuple

    def to_wire(self):
        return ("withdrawal-request", tuple(b.to_wire() for b in self.blinded))


@dataclass(frozen=True)
class WithdrawalResponse:
    blind_signatures: tuple

    def to_wire(self):
        return ("withdrawal-response", tuple(self.blind_signatures))


@dataclass(frozen=True)
class PaymentSubmission:
    """Spend bundle for a deposit into the payee's account."""

    invoice: Invoice
    inputs: tuple
    change: tuple

    def to_wire(self):
        return (
            "payment",
            self.invoice.to_wire(),
            tuple(i.to_wire() for i in self.inputs),
            tuple(b.to_wire() for b in self.change),
        )


@dataclass(frozen=True)
class MediationRequest:
    """Wallet-to-wallet payment: payer inputs plus fresh outputs for both sides."""

    invoice: Invoice
    inputs: tuple
    payee_outputs: tuple
    change: tuple
    id_info: bytes = None

    def to_wire(self):
        return (
            "mediation",
            self.invoice.to_wire(),
            tuple(i.to_wire() for i in self.inputs),
            tuple(b.to_wire() for b in self.payee_outputs),
            tuple(b.to_wire() for b in self.change),
            self.id_info,
        )


def encode_message(msg):
    return encode(msg.to_wire())


def decode_message(raw):
    wire = decode(raw)
    tag = wire[0]
    try:
        if tag == "withdrawal-request":
            return WithdrawalRequest(tuple(BlindedMessage.from_wire(b) for b in wire[1]))
        if tag == "withdrawal-response":
            return WithdrawalResponse(tuple(wire[1]))
        if tag == "payment":
            return PaymentSubmission(
                Invoice.from_wire(wire[1]),
                tuple(SpentInput.from_wire(i) for i in wire[2]),
                tuple(BlindedMessage.from_wire(b) for b in wire[3]),
            )
        if tag == "mediation":
            return MediationRequest(
                Invoice.from_wire(wire[1]),
                tuple(SpentInput.from_wire(i) for i in wire[2]),
                tuple(BlindedMessage.from_wire(b) for b in wire[3]),
                tuple(BlindedMessage.from_wire(b) for b in wire[4]),
                wire[5],
            )
    except (ValueError, TypeError) as exc:
        raise DecodeError(f"malformed protocol message: {exc}") from None
    raise DecodeError(f"unknown protocol message {tag!r}")
